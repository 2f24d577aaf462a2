#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "clicktomo/povm.hpp"

namespace clicktomo {

/// Measured or simulated click probabilities on a (setting x power) grid.
/// `pulses` is the number of trials behind each rate, 0 when unknown.
struct CountRateSurface {
    std::vector<DetectorSetting> settings;
    std::vector<double> powers;  // mean photons per pulse, strictly increasing, > 0
    Eigen::MatrixXd rates;       // rows = settings, columns = powers, entries in [0, 1]
    std::int64_t pulses = 0;

    void validate() const;  // throws std::invalid_argument
};

/// Rate rows linearly interpolated onto a new bias-current grid, power
/// columns untouched. Every grid point must lie within the measured span;
/// extrapolation is refused. Requires raw settings sorted by current.
CountRateSurface grid_by_current(const CountRateSurface& raw, const std::vector<double>& grid);

struct SettingFit {
    NonlinearResponse response;
    double residual = 0.0;    // root-mean-square relative residual of the fit
    bool degenerate = false;  // constant-rate data; eta unidentifiable
    std::vector<std::string> warnings;
};

/// Fit (eta, p[0..4]) to one click-probability-vs-power curve by minimizing
/// squared relative residuals, sum_j ((model(powers[j]) - rates[j]) /
/// max(rates[j], 1e-12))^2, subject to eta in (0, 1] and p[k] in [0, 1].
/// A damped Gauss-Newton search in logit-transformed coordinates runs from 8
/// deterministic starting points and the best optimum wins. Requires at
/// least 6 powers spanning two decades.
SettingFit fit_setting(const std::vector<double>& powers, const std::vector<double>& rates);

struct TomographyFit {
    std::vector<SettingFit> fits;  // one per setting, same order
    Povm povm;
};

/// Independent fit_setting per surface row, assembled into a POVM truncated
/// at n_mr. Row order in equals row order out.
TomographyFit fit_all(const CountRateSurface& surface, int n_mr);

}  // namespace clicktomo
