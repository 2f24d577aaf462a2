#pragma once

#include <Eigen/Dense>

namespace clicktomo {

enum class StateFamily { coherent, thermal };

/// Diagonal photon-number probabilities rho_nn of a light state, truncated at
/// photon number n_mr. Entries are non-negative and sum to 1 within 1e-9.
/// Immutable after construction.
class FockDistribution {
  public:
    /// Default state is the vacuum: n_mr = 0, probability 1 at n = 0.
    FockDistribution() : probs_(Eigen::VectorXd::Ones(1)) {}

    /// Validates non-negativity; renormalizes when the sum is off by more
    /// than 1e-9 (a vector already within tolerance is kept bit-identical).
    /// Throws std::invalid_argument on negative entries or a non-positive sum.
    static FockDistribution from_probabilities(Eigen::VectorXd probs);

    /// Uniform distribution over photon numbers 0..n_mr.
    static FockDistribution uniform(int n_mr);

    const Eigen::VectorXd& probs() const { return probs_; }
    double operator[](Eigen::Index n) const { return probs_[n]; }
    int n_mr() const { return static_cast<int>(probs_.size()) - 1; }
    Eigen::Index size() const { return probs_.size(); }

  private:
    explicit FockDistribution(Eigen::VectorXd probs) : probs_(std::move(probs)) {}
    Eigen::VectorXd probs_;
};

/// Poissonian photon statistics of a coherent state with the given mean,
/// truncated at n_mr and renormalized. Weights are evaluated in log space so
/// means up to ~1e5 photons/pulse stay finite.
FockDistribution coherent_distribution(double mean, int n_mr);

/// Bose-Einstein photon statistics of a thermal state with the given mean,
/// truncated at n_mr and renormalized.
FockDistribution thermal_distribution(double mean, int n_mr);

double mean_photon_number(const FockDistribution& d);

/// Second-order correlation g2(0) = (<n^2> - <n>) / <n>^2.
/// Throws std::domain_error when the mean photon number is zero.
double g2_zero(const FockDistribution& d);

/// Bhattacharyya overlap sum_n sqrt(a_n b_n), in [0, 1]; 1 iff a = b.
/// Throws std::invalid_argument when truncations differ.
double fidelity(const FockDistribution& a, const FockDistribution& b);

/// The family member whose mean photon number matches d, at d's truncation.
FockDistribution closest_reference_state(const FockDistribution& d, StateFamily family);

}  // namespace clicktomo
