#pragma once

#include <cstdint>
#include <vector>

#include "clicktomo/povm.hpp"

namespace clicktomo {

struct ReconstructionConfig {
    std::int64_t iterations = 1000000;
    double early_stop_delta = 0.0;  // stop when per-iteration likelihood gain drops below; 0 disables
    int n_mr = 30;
    bool include_no_click = true;   // expand each setting into the (click, no-click) outcome pair
    std::int64_t trace_stride = 1000;

    void validate() const;
};

/// One multiplicative maximum-likelihood update of rho given measured click
/// rates. With include_no_click the update runs over the completed outcome
/// set and is a proper EM step for per-setting Bernoulli data; without it,
/// the update uses click outcomes only. The result is renormalized, and
/// components at zero stay at zero.
///
/// Throws std::runtime_error when the state assigns zero probability to an
/// observed outcome (support mismatch).
FockDistribution em_step(const FockDistribution& rho, const Povm& povm,
                         const Eigen::VectorXd& measured, bool include_no_click = true);

struct ReconstructionResult {
    FockDistribution rho;
    std::vector<double> loglik_trace;  // sampled every trace_stride iterations, plus start and end
    std::int64_t iterations_run = 0;
    Eigen::VectorXd predicted;         // click rates of rho under the POVM
    ReconstructionConfig config;
};

/// Iterates em_step from the uniform distribution over 0..cfg.n_mr.
/// cfg.n_mr may be at most povm.n_mr(); smaller values truncate the POVM
/// columns (photon numbers beyond cfg.n_mr are assumed unpopulated).
ReconstructionResult reconstruct(const Povm& povm, const Eigen::VectorXd& measured,
                                 const ReconstructionConfig& cfg = {});

/// Bernoulli log-likelihood sum_nu [R log p + (1 - R) log(1 - p)] of the
/// measured rates under the state's predicted rates.
double log_likelihood(const Povm& povm, const FockDistribution& rho,
                      const Eigen::VectorXd& measured);

/// Reduced chi-square under the constant-relative-error model:
///   sum_nu ((measured - predicted) / (relative_error * measured))^2 / N.
/// Zero measured entries are excluded and N adjusted accordingly.
double chi_square(const Eigen::VectorXd& measured, const Eigen::VectorXd& predicted,
                  double relative_error);

enum class FamilyVerdict { coherent, thermal, undecided };

struct ClassificationResult {
    FamilyVerdict verdict = FamilyVerdict::undecided;
    double chi2_coherent = 0.0;
    double chi2_thermal = 0.0;
    FockDistribution reconstructed;
};

/// Reconstructs the state, then scores the measured rates against the
/// predicted rates of the closest coherent and closest thermal reference.
/// The family with the lower chi-square wins; `undecided` when the two
/// values are within 10% of each other.
ClassificationResult classify_family(const Povm& povm, const Eigen::VectorXd& measured,
                                     double relative_error,
                                     const ReconstructionConfig& cfg = {});

}  // namespace clicktomo
