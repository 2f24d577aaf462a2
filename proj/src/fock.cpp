#include "clicktomo/fock.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace clicktomo {

namespace {

constexpr double kSumTolerance = 1e-9;

void check_truncation(int n_mr) {
    if (n_mr < 0) throw std::invalid_argument("truncation index n_mr must be >= 0");
}

/// Normalized exp of log-weights; subtracting the maximum keeps every exp in
/// range regardless of the raw magnitudes.
Eigen::VectorXd exp_normalized(const Eigen::VectorXd& log_weights) {
    const double top = log_weights.maxCoeff();
    Eigen::VectorXd probs = (log_weights.array() - top).exp();
    probs /= probs.sum();
    return probs;
}

}  // namespace

FockDistribution FockDistribution::from_probabilities(Eigen::VectorXd probs) {
    if (probs.size() == 0) throw std::invalid_argument("photon-number distribution is empty");
    for (Eigen::Index n = 0; n < probs.size(); ++n) {
        if (!(probs[n] >= 0.0) || !std::isfinite(probs[n])) {
            throw std::invalid_argument("photon-number probability at n=" + std::to_string(n) +
                                        " is negative or not finite");
        }
    }
    const double sum = probs.sum();
    if (sum <= 0.0) throw std::invalid_argument("photon-number probabilities sum to zero");
    if (std::abs(sum - 1.0) > kSumTolerance) probs /= sum;
    return FockDistribution(std::move(probs));
}

FockDistribution FockDistribution::uniform(int n_mr) {
    check_truncation(n_mr);
    return FockDistribution(Eigen::VectorXd::Constant(n_mr + 1, 1.0 / (n_mr + 1)));
}

FockDistribution coherent_distribution(double mean, int n_mr) {
    check_truncation(n_mr);
    if (!(mean >= 0.0)) throw std::invalid_argument("coherent mean photon number must be >= 0");
    Eigen::VectorXd probs = Eigen::VectorXd::Zero(n_mr + 1);
    if (mean == 0.0) {
        probs[0] = 1.0;
        return FockDistribution::from_probabilities(std::move(probs));
    }
    Eigen::VectorXd logw(n_mr + 1);
    const double log_mean = std::log(mean);
    for (int n = 0; n <= n_mr; ++n) {
        logw[n] = -mean + n * log_mean - std::lgamma(n + 1.0);
    }
    return FockDistribution::from_probabilities(exp_normalized(logw));
}

FockDistribution thermal_distribution(double mean, int n_mr) {
    check_truncation(n_mr);
    if (!(mean >= 0.0)) throw std::invalid_argument("thermal mean photon number must be >= 0");
    Eigen::VectorXd probs = Eigen::VectorXd::Zero(n_mr + 1);
    if (mean == 0.0) {
        probs[0] = 1.0;
        return FockDistribution::from_probabilities(std::move(probs));
    }
    // rho_n proportional to mean^n / (1+mean)^(n+1); geometric in log space.
    const double log_ratio = std::log(mean) - std::log1p(mean);
    Eigen::VectorXd logw(n_mr + 1);
    for (int n = 0; n <= n_mr; ++n) logw[n] = n * log_ratio;
    return FockDistribution::from_probabilities(exp_normalized(logw));
}

double mean_photon_number(const FockDistribution& d) {
    double acc = 0.0;
    for (Eigen::Index n = 0; n < d.size(); ++n) acc += static_cast<double>(n) * d[n];
    return acc;
}

double g2_zero(const FockDistribution& d) {
    double first = 0.0;
    double second = 0.0;
    for (Eigen::Index n = 0; n < d.size(); ++n) {
        const double x = static_cast<double>(n);
        first += x * d[n];
        second += x * x * d[n];
    }
    if (first <= 0.0) {
        throw std::domain_error("g2(0) is undefined for a zero-mean photon-number distribution");
    }
    return (second - first) / (first * first);
}

double fidelity(const FockDistribution& a, const FockDistribution& b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("fidelity requires matching truncations (got n_mr " +
                                    std::to_string(a.n_mr()) + " and " + std::to_string(b.n_mr()) +
                                    ")");
    }
    return (a.probs().array() * b.probs().array()).sqrt().sum();
}

FockDistribution closest_reference_state(const FockDistribution& d, StateFamily family) {
    const double mean = mean_photon_number(d);
    switch (family) {
        case StateFamily::coherent: return coherent_distribution(mean, d.n_mr());
        case StateFamily::thermal: return thermal_distribution(mean, d.n_mr());
    }
    throw std::invalid_argument("unknown state family");
}

}  // namespace clicktomo
