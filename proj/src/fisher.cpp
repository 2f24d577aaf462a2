#include "clicktomo/fisher.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace clicktomo {

namespace {

constexpr double kProbabilityClamp = 1e-12;

Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& matrix, double cutoff, int& dropped) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(matrix);
    if (solver.info() != Eigen::Success) {
        throw std::runtime_error("eigendecomposition of the information matrix failed");
    }
    const Eigen::VectorXd& values = solver.eigenvalues();
    const double top = values.cwiseAbs().maxCoeff();
    const double threshold = cutoff * top;
    Eigen::VectorXd inverted = Eigen::VectorXd::Zero(values.size());
    dropped = 0;
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        if (values[i] > threshold && values[i] > 0.0) {
            inverted[i] = 1.0 / values[i];
        } else {
            ++dropped;
        }
    }
    return solver.eigenvectors() * inverted.asDiagonal() * solver.eigenvectors().transpose();
}

/// Orthonormal basis of the tangent space of the probability simplex,
/// {x : sum x = 0}: every column of the returned n x (n-1) matrix is
/// orthogonal to the all-ones vector.
Eigen::MatrixXd sum_zero_basis(Eigen::Index n) {
    Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(ones);
    Eigen::MatrixXd q = qr.householderQ();
    return q.rightCols(n - 1);
}

}  // namespace

MeasurementBudget MeasurementBudget::uniform_split(std::int64_t total_shots, int n_settings) {
    if (n_settings < 1) throw std::invalid_argument("need at least one setting");
    if (total_shots < 0) throw std::invalid_argument("total_shots must be >= 0");
    MeasurementBudget budget;
    budget.total_shots = total_shots;
    budget.shots_per_setting.resize(static_cast<std::size_t>(n_settings));
    const std::int64_t base = total_shots / n_settings;
    const std::int64_t remainder = total_shots % n_settings;
    for (int i = 0; i < n_settings; ++i) {
        budget.shots_per_setting[static_cast<std::size_t>(i)] = base + (i < remainder ? 1 : 0);
    }
    return budget;
}

void MeasurementBudget::validate() const {
    if (shots_per_setting.empty()) throw std::invalid_argument("budget covers no settings");
    std::int64_t sum = 0;
    for (std::size_t i = 0; i < shots_per_setting.size(); ++i) {
        if (shots_per_setting[i] < 0) {
            throw std::invalid_argument("negative shot count at setting " + std::to_string(i));
        }
        sum += shots_per_setting[i];
    }
    if (sum != total_shots) {
        throw std::invalid_argument("shots_per_setting sums to " + std::to_string(sum) +
                                    ", expected total_shots = " + std::to_string(total_shots));
    }
}

Eigen::MatrixXd fisher_matrix(const Povm& povm, const FockDistribution& rho,
                              const MeasurementBudget& budget) {
    budget.validate();
    if (povm.elements().cols() != rho.size()) {
        throw std::invalid_argument("POVM truncation does not match the state");
    }
    if (static_cast<Eigen::Index>(budget.shots_per_setting.size()) != povm.elements().rows()) {
        throw std::invalid_argument("budget covers " +
                                    std::to_string(budget.shots_per_setting.size()) +
                                    " settings, POVM has " +
                                    std::to_string(povm.elements().rows()));
    }
    const Eigen::MatrixXd& elements = povm.elements();
    Eigen::VectorXd predicted = elements * rho.probs();
    Eigen::MatrixXd scaled(elements.rows(), elements.cols());
    for (Eigen::Index i = 0; i < elements.rows(); ++i) {
        const double p =
            std::min(std::max(predicted[i], kProbabilityClamp), 1.0 - kProbabilityClamp);
        const double shots = static_cast<double>(budget.shots_per_setting[static_cast<std::size_t>(i)]);
        scaled.row(i) = elements.row(i) * std::sqrt(shots / (p * (1.0 - p)));
    }
    Eigen::MatrixXd fisher = Eigen::MatrixXd::Zero(elements.cols(), elements.cols());
    fisher.selfadjointView<Eigen::Lower>().rankUpdate(scaled.transpose());
    fisher = fisher.selfadjointView<Eigen::Lower>();
    return fisher;
}

CrbReport crb_errors(const Eigen::MatrixXd& fisher, const FockDistribution& rho,
                     const CrbOptions& options) {
    if (fisher.rows() != fisher.cols()) throw std::invalid_argument("information matrix not square");
    if (fisher.rows() != rho.size()) {
        throw std::invalid_argument("information matrix size does not match the state");
    }
    if (!fisher.isApprox(fisher.transpose(), 1e-9)) {
        throw std::invalid_argument("information matrix is not symmetric");
    }
    if (!(options.cutoff >= 0.0)) throw std::invalid_argument("cutoff must be >= 0");
    const Eigen::Index n = fisher.rows();
    const Eigen::MatrixXd symmetric = 0.5 * (fisher + fisher.transpose());

    CrbReport report;
    Eigen::MatrixXd covariance;
    if (options.constrained && n > 1) {
        const Eigen::MatrixXd basis = sum_zero_basis(n);
        const Eigen::MatrixXd reduced = basis.transpose() * symmetric * basis;
        covariance = basis * pseudo_inverse(reduced, options.cutoff, report.dropped) *
                     basis.transpose();
    } else {
        covariance = pseudo_inverse(symmetric, options.cutoff, report.dropped);
    }
    report.condition_flag = report.dropped > 0;
    report.sigma.resize(n);
    report.relative.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        report.sigma[i] = std::sqrt(std::max(covariance(i, i), 0.0));
        report.relative[i] = rho[i] > 0.0 ? report.sigma[i] / rho[i]
                                          : std::numeric_limits<double>::infinity();
    }
    return report;
}

Povm linear_apd_povm(double eta, const std::vector<double>& transmissions, int n_mr) {
    if (!(eta > 0.0 && eta <= 1.0)) throw std::invalid_argument("eta must lie in (0, 1]");
    if (transmissions.empty()) throw std::invalid_argument("need at least one transmission");
    if (n_mr < 0) throw std::invalid_argument("n_mr must be >= 0");
    std::vector<DetectorSetting> settings;
    settings.reserve(transmissions.size());
    Eigen::MatrixXd elements(static_cast<Eigen::Index>(transmissions.size()), n_mr + 1);
    for (std::size_t i = 0; i < transmissions.size(); ++i) {
        const double t = transmissions[i];
        if (!(t >= 0.0 && t <= 1.0)) {
            throw std::invalid_argument("transmission " + std::to_string(i) +
                                        " is outside [0, 1]");
        }
        settings.push_back(DetectorSetting{t, static_cast<int>(i)});
        const double survive = 1.0 - eta * t;
        double power = 1.0;  // survive^n
        for (int n = 0; n <= n_mr; ++n) {
            elements(static_cast<Eigen::Index>(i), n) = 1.0 - power;
            power *= survive;
        }
    }
    return Povm(std::move(settings), std::move(elements));
}

Eigen::VectorXd compare_detectors(const Povm& a, const Povm& b, const FockDistribution& rho,
                                  const MeasurementBudget& budget) {
    if (a.n_mr() != b.n_mr()) {
        throw std::invalid_argument("detectors have different truncations (" +
                                    std::to_string(a.n_mr()) + " vs " + std::to_string(b.n_mr()) +
                                    ")");
    }
    const CrbReport report_a = crb_errors(fisher_matrix(a, rho, budget), rho);
    const CrbReport report_b = crb_errors(fisher_matrix(b, rho, budget), rho);
    Eigen::VectorXd ratio(rho.size());
    for (Eigen::Index n = 0; n < rho.size(); ++n) {
        ratio[n] = rho[n] > 1e-12 ? report_a.relative[n] / report_b.relative[n]
                                  : std::numeric_limits<double>::quiet_NaN();
    }
    return ratio;
}

}  // namespace clicktomo
