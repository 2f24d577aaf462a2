#pragma once

#include <cstdint>
#include <vector>

#include "clicktomo/povm.hpp"

namespace clicktomo {

struct MeasurementBudget {
    std::int64_t total_shots = 0;
    std::vector<std::int64_t> shots_per_setting;  // must sum to total_shots

    /// Splits total_shots as evenly as possible; the first settings absorb
    /// any remainder.
    static MeasurementBudget uniform_split(std::int64_t total_shots, int n_settings);
    void validate() const;
};

/// Fisher information for the diagonal state components under per-setting
/// Bernoulli (click / no-click) statistics:
///   F_ab = sum_nu N_nu Pi_nu_a Pi_nu_b / (p_nu (1 - p_nu)),
/// with p_nu = sum_n Pi_nu_n rho_n clamped to [1e-12, 1 - 1e-12] before the
/// variance factor. Symmetric positive semi-definite by construction.
Eigen::MatrixXd fisher_matrix(const Povm& povm, const FockDistribution& rho,
                              const MeasurementBudget& budget);

struct CrbOptions {
    bool constrained = false;  // restrict to the unit-sum tangent space before inverting
    double cutoff = 1e-10;     // relative eigenvalue cutoff of the pseudo-inverse
};

struct CrbReport {
    Eigen::VectorXd sigma;     // lower bound on the standard error of each rho_n
    Eigen::VectorXd relative;  // sigma_n / rho_n; +inf where rho_n = 0
    bool condition_flag = false;  // set when near-singular directions were dropped
    int dropped = 0;           // number of eigenvalues below the cutoff
};

/// Standard errors from the pseudo-inverse of the information matrix.
/// Eigenvalues below cutoff * lambda_max are dropped rather than inverted;
/// the report flags when that happened.
CrbReport crb_errors(const Eigen::MatrixXd& fisher, const FockDistribution& rho,
                     const CrbOptions& options = {});

/// POVM of a linearly attenuated on/off detector: row nu has elements
/// 1 - (1 - eta * t_nu)^n, with transmission t_nu as the tuning parameter.
Povm linear_apd_povm(double eta, const std::vector<double>& transmissions, int n_mr);

/// Per-n ratio of relative CRB errors, detector a over detector b, for the
/// same state and budget. Entries with rho_n <= 1e-12 are NaN.
Eigen::VectorXd compare_detectors(const Povm& a, const Povm& b, const FockDistribution& rho,
                                  const MeasurementBudget& budget);

}  // namespace clicktomo
