#pragma once

#include <array>
#include <vector>

#include <Eigen/Dense>

#include "clicktomo/fock.hpp"

namespace clicktomo {

/// One setting of the detector tuning parameter. `tuning` is the bias current
/// in microamperes for current-biased detectors; other detector models store
/// their own tuning value here (e.g. attenuator transmission).
struct DetectorSetting {
    double tuning = 0.0;
    int index = 0;
};

/// Per-setting detector parameters: linear efficiency eta in (0, 1] followed
/// by a nonlinear stage that clicks with probability p[k] when exactly k
/// photons were absorbed, k = 0..4. p[0] is the dark-count probability; for
/// k > 4 the stage is taken to click with certainty.
struct NonlinearResponse {
    double eta = 1.0;
    std::array<double, 5> p{0.0, 1.0, 1.0, 1.0, 1.0};

    void validate() const;  // throws std::invalid_argument
};

/// Click-outcome POVM: element (nu, n) is the click probability for the
/// n-photon Fock state at setting nu. The no-click element is implicitly
/// 1 - element(nu, n). Immutable after construction; safe to share across
/// threads.
class Povm {
  public:
    /// Validates one setting per row and all elements in [0, 1].
    Povm(std::vector<DetectorSetting> settings, Eigen::MatrixXd elements);

    const std::vector<DetectorSetting>& settings() const { return settings_; }
    const Eigen::MatrixXd& elements() const { return elements_; }
    int n_mr() const { return static_cast<int>(elements_.cols()) - 1; }
    int setting_count() const { return static_cast<int>(elements_.rows()); }

  private:
    std::vector<DetectorSetting> settings_;
    Eigen::MatrixXd elements_;
};

/// Binomial loss channel: entry (k, k') = C(k, k') eta^k' (1-eta)^(k-k') for
/// k' <= k, zero above the diagonal. Every row sums to 1. Coefficients are
/// evaluated through log-gamma so truncations up to n_mr = 200 stay finite.
Eigen::MatrixXd bernoulli_matrix(double eta, int n_mr);

/// Full POVM row over Fock inputs 0..n_mr: the nonlinear response vector
/// (p[0..4], then 1 beyond) pushed through the loss channel of resp.eta.
/// Requires n_mr >= 4.
Eigen::VectorXd assemble_povm_row(const NonlinearResponse& resp, int n_mr);

/// Click probability for a coherent probe of the given mean photon number:
/// with mu = eta * mean,
///   R = 1 - exp(-mu) * sum_{k<=4} (1 - p[k]) mu^k / k!.
/// Evaluated without cancellation so rates far below 1 keep full relative
/// precision; stable for mu up to 1e5.
double click_probability_coherent(const NonlinearResponse& resp, double mean);

/// Click probability for a thermal input of the given mean. A binomial loss
/// channel maps thermal onto thermal, so the closed form uses Bose-Einstein
/// weights of mean eta * mean with no truncation.
double click_probability_thermal(const NonlinearResponse& resp, double mean);

/// Tr(rho Pi): inner product of one POVM row with a state's probabilities.
double click_probability_state(const Eigen::VectorXd& povm_row, const FockDistribution& d);

/// Expected click rate at every setting of the POVM for the given state.
Eigen::VectorXd predicted_rates(const Povm& povm, const FockDistribution& d);

}  // namespace clicktomo
