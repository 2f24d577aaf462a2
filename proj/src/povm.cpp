#include "clicktomo/povm.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "poisson_detail.hpp"

namespace clicktomo {

namespace {

/// log C(n,k) with long-double lgamma; intermediate precision keeps row sums
/// of the loss matrix within 1e-12 of one even at n ~ 200.
long double log_binomial(int n, int k) {
    return lgammal(static_cast<long double>(n) + 1.0L) -
           lgammal(static_cast<long double>(k) + 1.0L) -
           lgammal(static_cast<long double>(n - k) + 1.0L);
}

void check_probability(double value, const char* name) {
    if (!(value >= 0.0 && value <= 1.0)) {
        throw std::invalid_argument(std::string(name) + " must lie in [0, 1]");
    }
}

}  // namespace

void NonlinearResponse::validate() const {
    check_probability(eta, "detection efficiency eta");
    check_probability(p[0], "dark-count probability p0");
    for (int k = 1; k <= 4; ++k) {
        check_probability(p[k], ("click probability p" + std::to_string(k)).c_str());
    }
}

Povm::Povm(std::vector<DetectorSetting> settings, Eigen::MatrixXd elements)
    : settings_(std::move(settings)), elements_(std::move(elements)) {
    if (settings_.empty()) throw std::invalid_argument("POVM needs at least one setting");
    if (elements_.rows() != static_cast<Eigen::Index>(settings_.size())) {
        throw std::invalid_argument("POVM row count does not match setting count");
    }
    if (elements_.cols() < 1) throw std::invalid_argument("POVM needs at least one photon column");
    for (Eigen::Index r = 0; r < elements_.rows(); ++r) {
        for (Eigen::Index c = 0; c < elements_.cols(); ++c) {
            const double v = elements_(r, c);
            if (!(v >= -1e-12 && v <= 1.0 + 1e-12)) {
                throw std::invalid_argument("POVM element out of [0, 1] at setting " +
                                            std::to_string(r) + ", photon number " +
                                            std::to_string(c));
            }
        }
    }
}

Eigen::MatrixXd bernoulli_matrix(double eta, int n_mr) {
    check_probability(eta, "transmission eta");
    if (n_mr < 0) throw std::invalid_argument("truncation index n_mr must be >= 0");
    const int dim = n_mr + 1;
    Eigen::MatrixXd loss = Eigen::MatrixXd::Zero(dim, dim);
    if (eta == 0.0) {
        loss.col(0).setOnes();
        return loss;
    }
    if (eta == 1.0) {
        loss.setIdentity();
        return loss;
    }
    const long double log_eta = logl(static_cast<long double>(eta));
    const long double log_comp = log1pl(-static_cast<long double>(eta));
    for (int n = 0; n < dim; ++n) {
        for (int k = 0; k <= n; ++k) {
            const long double log_term =
                log_binomial(n, k) + k * log_eta + (n - k) * log_comp;
            loss(n, k) = static_cast<double>(expl(log_term));
        }
    }
    return loss;
}

Eigen::VectorXd assemble_povm_row(const NonlinearResponse& response, int n_mr) {
    response.validate();
    if (n_mr < 4) {
        throw std::invalid_argument("POVM row needs n_mr >= 4 to cover the nonlinear regime");
    }
    // Click element after loss: Pi_n = 1 - sum_{k<=min(n,4)} B(k|n,eta) (1-p_k),
    // using that p_k = 1 for k >= 5 removes the no-click contribution there.
    Eigen::VectorXd row(n_mr + 1);
    const double eta = response.eta;
    const long double log_eta = eta > 0.0 ? logl(static_cast<long double>(eta)) : 0.0L;
    const long double log_comp = eta < 1.0 ? log1pl(-static_cast<long double>(eta)) : 0.0L;
    for (int n = 0; n <= n_mr; ++n) {
        long double no_click = 0.0L;
        const int kmax = std::min(n, 4);
        for (int k = 0; k <= kmax; ++k) {
            if (eta == 0.0 && k > 0) break;
            if (eta == 1.0 && k < n) continue;
            long double weight;
            if (eta == 0.0) {
                weight = (k == 0) ? 1.0L : 0.0L;
            } else if (eta == 1.0) {
                weight = (k == n) ? 1.0L : 0.0L;
            } else {
                weight = expl(log_binomial(n, k) + k * log_eta + (n - k) * log_comp);
            }
            no_click += weight * (1.0L - static_cast<long double>(response.p[k]));
        }
        row[n] = static_cast<double>(1.0L - no_click);
        if (row[n] < 0.0) row[n] = 0.0;
        if (row[n] > 1.0) row[n] = 1.0;
    }
    return row;
}

double click_probability_coherent(const NonlinearResponse& response, double mean) {
    response.validate();
    if (!(mean >= 0.0)) throw std::invalid_argument("coherent mean photon number must be >= 0");
    // After Bernoulli loss a coherent state stays coherent with mean eta*mu,
    // so the click probability reduces to the registered-photon expansion
    //   R = P(K >= 5; eta*mu) + e^{-eta*mu} sum_{k<=4} p_k (eta*mu)^k / k!,
    // a sum of positive terms that is immune to cancellation at small rates.
    const double mu = response.eta * mean;
    double rate = detail::poisson_tail_ge5(mu);
    const auto weights = detail::poisson_weights_0_4(mu);
    for (int k = 0; k <= 4; ++k) rate += weights[static_cast<std::size_t>(k)] * response.p[k];
    if (rate > 1.0) rate = 1.0;
    return rate;
}

double click_probability_thermal(const NonlinearResponse& response, double mean) {
    response.validate();
    if (!(mean >= 0.0)) throw std::invalid_argument("thermal mean photon number must be >= 0");
    // Loss maps a thermal state to a thermal state with mean eta*mu. With
    // BE_k = nu^k / (1+nu)^{k+1} the tail P(K >= 5) = (nu/(1+nu))^5 is exact.
    const double nu = response.eta * mean;
    const double ratio = nu / (1.0 + nu);
    double rate = std::pow(ratio, 5);
    double weight = 1.0 / (1.0 + nu);
    for (int k = 0; k <= 4; ++k) {
        rate += weight * response.p[k];
        weight *= ratio;
    }
    if (rate > 1.0) rate = 1.0;
    return rate;
}

double click_probability_state(const Eigen::VectorXd& row, const FockDistribution& d) {
    if (row.size() != d.size()) {
        throw std::invalid_argument("POVM row truncation does not match the state (row has " +
                                    std::to_string(row.size()) + " entries, state has " +
                                    std::to_string(d.size()) + ")");
    }
    return row.dot(d.probs());
}

Eigen::VectorXd predicted_rates(const Povm& povm, const FockDistribution& d) {
    if (povm.elements().cols() != d.size()) {
        throw std::invalid_argument("POVM truncation does not match the state");
    }
    return povm.elements() * d.probs();
}

}  // namespace clicktomo
