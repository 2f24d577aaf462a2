#include "clicktomo/tomography.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "poisson_detail.hpp"

namespace clicktomo {

namespace {

constexpr double kRateFloor = 1e-12;
constexpr int kMaxOuterIterations = 600;
constexpr int kMaxDampingRetries = 60;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double logit(double q) { return std::log(q / (1.0 - q)); }

struct ModelPoint {
    double rate = 0.0;
    double d_eta = 0.0;            // partial derivative in eta
    std::array<double, 5> d_p{};   // partial derivatives in p[k]
};

/// Click rate and derivatives at one probe power. With x = eta * power the
/// rate is tail5(x) + sum_k pois_k(x) p[k]; d(tail5)/dx = pois_4(x) and
/// d(pois_k)/dx = pois_{k-1}(x) - pois_k(x).
ModelPoint evaluate_model(const NonlinearResponse& resp, double power) {
    const double x = resp.eta * power;
    const auto w = detail::poisson_weights_0_4(x);
    ModelPoint out;
    out.rate = detail::poisson_tail_ge5(x);
    double d_rate_dx = w[4];
    for (int k = 0; k <= 4; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        out.rate += w[ku] * resp.p[ku];
        out.d_p[ku] = w[ku];
        const double prev = (k == 0) ? 0.0 : w[ku - 1];
        d_rate_dx += resp.p[ku] * (prev - w[ku]);
    }
    out.d_eta = power * d_rate_dx;
    return out;
}

NonlinearResponse unpack(const Eigen::Matrix<double, 6, 1>& theta) {
    NonlinearResponse resp;
    resp.eta = sigmoid(theta[0]);
    for (int k = 0; k <= 4; ++k) resp.p[static_cast<std::size_t>(k)] = sigmoid(theta[k + 1]);
    return resp;
}

double objective(const Eigen::Matrix<double, 6, 1>& theta, const std::vector<double>& powers,
                 const std::vector<double>& rates) {
    const NonlinearResponse resp = unpack(theta);
    double obj = 0.0;
    for (std::size_t j = 0; j < powers.size(); ++j) {
        const double scale = 1.0 / std::max(rates[j], kRateFloor);
        const double r = (evaluate_model(resp, powers[j]).rate - rates[j]) * scale;
        obj += r * r;
    }
    return obj;
}

void residuals_and_jacobian(const Eigen::Matrix<double, 6, 1>& theta,
                            const std::vector<double>& powers, const std::vector<double>& rates,
                            Eigen::VectorXd& r, Eigen::MatrixXd& jac) {
    const NonlinearResponse resp = unpack(theta);
    const double eta_gain = resp.eta * (1.0 - resp.eta);
    std::array<double, 5> p_gain{};
    for (std::size_t k = 0; k < 5; ++k) p_gain[k] = resp.p[k] * (1.0 - resp.p[k]);
    for (std::size_t j = 0; j < powers.size(); ++j) {
        const double scale = 1.0 / std::max(rates[j], kRateFloor);
        const ModelPoint m = evaluate_model(resp, powers[j]);
        const auto jj = static_cast<Eigen::Index>(j);
        r[jj] = (m.rate - rates[j]) * scale;
        jac(jj, 0) = scale * m.d_eta * eta_gain;
        for (std::size_t k = 0; k < 5; ++k) {
            jac(jj, static_cast<Eigen::Index>(k + 1)) = scale * m.d_p[k] * p_gain[k];
        }
    }
}

/// Damped Gauss-Newton descent on the squared relative residuals, run in
/// logit coordinates so the box constraints eta, p[k] in (0, 1) hold
/// implicitly. Returns the reached objective value.
double minimize_from(Eigen::Matrix<double, 6, 1>& theta, const std::vector<double>& powers,
                     const std::vector<double>& rates) {
    using Vector6 = Eigen::Matrix<double, 6, 1>;
    using Matrix6 = Eigen::Matrix<double, 6, 6>;
    const auto n = static_cast<Eigen::Index>(powers.size());
    Eigen::VectorXd r(n);
    Eigen::MatrixXd jac(n, 6);
    double obj = objective(theta, powers, rates);
    double damping = 1e-3;
    for (int iter = 0; iter < kMaxOuterIterations; ++iter) {
        residuals_and_jacobian(theta, powers, rates, r, jac);
        const Vector6 grad = jac.transpose() * r;
        const Matrix6 hess = jac.transpose() * jac;
        if (grad.lpNorm<Eigen::Infinity>() < 1e-14 * std::max(1.0, obj)) break;
        bool accepted = false;
        for (int retry = 0; retry < kMaxDampingRetries; ++retry) {
            Matrix6 damped = hess;
            for (int i = 0; i < 6; ++i) {
                damped(i, i) += damping * std::max(hess(i, i), 1e-12);
            }
            const Vector6 step = damped.ldlt().solve(-grad);
            const Vector6 candidate = theta + step;
            const double candidate_obj = objective(candidate, powers, rates);
            if (candidate_obj < obj) {
                theta = candidate;
                const double gain = obj - candidate_obj;
                obj = candidate_obj;
                damping = std::max(damping * 0.3, 1e-12);
                accepted = true;
                if (gain < 1e-18 * std::max(1.0, obj) && step.lpNorm<Eigen::Infinity>() < 1e-10) {
                    return obj;
                }
                break;
            }
            damping *= 4.0;
            if (damping > 1e16) return obj;
        }
        if (!accepted) break;
        if (obj < 1e-26) break;
    }
    return obj;
}

/// Least squares for p on the box [0, 1]^5 by active-set iteration: solve the
/// free coordinates unconstrained, pin the worst bound violator, and release
/// pinned coordinates whose gradient points back inside.
Eigen::Matrix<double, 5, 1> bounded_p_solve(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
    using Vector5 = Eigen::Matrix<double, 5, 1>;
    Vector5 p = Vector5::Constant(0.5);
    std::array<int, 5> pin{};  // 0 free, -1 at zero, +1 at one
    for (int pass = 0; pass < 60; ++pass) {
        Eigen::VectorXd rhs = b;
        std::vector<int> free_idx;
        for (int k = 0; k < 5; ++k) {
            if (pin[static_cast<std::size_t>(k)] == 0) {
                free_idx.push_back(k);
            } else if (pin[static_cast<std::size_t>(k)] == 1) {
                rhs -= a.col(k);
            }
        }
        if (!free_idx.empty()) {
            Eigen::MatrixXd sub(a.rows(), static_cast<Eigen::Index>(free_idx.size()));
            for (std::size_t c = 0; c < free_idx.size(); ++c) {
                sub.col(static_cast<Eigen::Index>(c)) = a.col(free_idx[c]);
            }
            const Eigen::VectorXd sol = sub.colPivHouseholderQr().solve(rhs);
            for (std::size_t c = 0; c < free_idx.size(); ++c) {
                p[free_idx[c]] = sol[static_cast<Eigen::Index>(c)];
            }
        }
        for (int k = 0; k < 5; ++k) {
            if (pin[static_cast<std::size_t>(k)] != 0) {
                p[k] = pin[static_cast<std::size_t>(k)] == 1 ? 1.0 : 0.0;
            }
        }
        int worst = -1;
        double worst_excess = 1e-15;
        for (int k : free_idx) {
            const double excess = std::max(-p[k], p[k] - 1.0);
            if (excess > worst_excess) {
                worst_excess = excess;
                worst = k;
            }
        }
        if (worst >= 0) {
            pin[static_cast<std::size_t>(worst)] = p[worst] < 0.0 ? -1 : 1;
            p[worst] = pin[static_cast<std::size_t>(worst)] == -1 ? 0.0 : 1.0;
            continue;
        }
        const Vector5 grad = a.transpose() * (a * p - b);
        bool released = false;
        for (int k = 0; k < 5; ++k) {
            const auto ku = static_cast<std::size_t>(k);
            if ((pin[ku] == -1 && grad[k] < -1e-12) || (pin[ku] == 1 && grad[k] > 1e-12)) {
                pin[ku] = 0;
                released = true;
            }
        }
        if (!released) break;
    }
    return p.cwiseMax(0.0).cwiseMin(1.0);
}

/// Best achievable objective at a fixed eta. The model is linear in p there,
/// so p is profiled out with a bounded weighted least squares solve.
double profile_at_eta(double eta, const std::vector<double>& powers,
                      const std::vector<double>& rates, Eigen::Matrix<double, 5, 1>& p_out) {
    const auto n = static_cast<Eigen::Index>(powers.size());
    Eigen::MatrixXd a(n, 5);
    Eigen::VectorXd b(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        const double x = eta * powers[ju];
        const auto w = detail::poisson_weights_0_4(x);
        const double scale = 1.0 / std::max(rates[ju], kRateFloor);
        for (int k = 0; k < 5; ++k) a(j, k) = w[static_cast<std::size_t>(k)] * scale;
        b[j] = (rates[ju] - detail::poisson_tail_ge5(x)) * scale;
    }
    p_out = bounded_p_solve(a, b);
    return (a * p_out - b).squaredNorm();
}

/// Locates the efficiency by scanning the profiled objective over a log grid
/// and zooming onto the minimum. Deterministic; gives the solver a start
/// inside the (narrow) global basin.
Eigen::Matrix<double, 6, 1> profiled_start(const std::vector<double>& powers,
                                           const std::vector<double>& rates) {
    constexpr int kScanPoints = 240;
    constexpr int kZoomRounds = 3;
    constexpr int kZoomPoints = 24;
    Eigen::Matrix<double, 5, 1> p;
    std::vector<double> grid(kScanPoints);
    for (int i = 0; i < kScanPoints; ++i) {
        grid[static_cast<std::size_t>(i)] =
            std::pow(10.0, -4.0 + 4.0 * static_cast<double>(i) / (kScanPoints - 1));
    }
    int best = 0;
    double best_obj = std::numeric_limits<double>::infinity();
    for (int i = 0; i < kScanPoints; ++i) {
        const double obj = profile_at_eta(grid[static_cast<std::size_t>(i)], powers, rates, p);
        if (obj < best_obj) {
            best_obj = obj;
            best = i;
        }
    }
    double lo = grid[static_cast<std::size_t>(std::max(0, best - 1))];
    double hi = grid[static_cast<std::size_t>(std::min(kScanPoints - 1, best + 1))];
    double eta_best = grid[static_cast<std::size_t>(best)];
    for (int round = 0; round < kZoomRounds; ++round) {
        int zoom_best = 0;
        best_obj = std::numeric_limits<double>::infinity();
        std::array<double, kZoomPoints> zoom{};
        for (int i = 0; i < kZoomPoints; ++i) {
            zoom[static_cast<std::size_t>(i)] =
                lo + (hi - lo) * static_cast<double>(i) / (kZoomPoints - 1);
            const double obj = profile_at_eta(zoom[static_cast<std::size_t>(i)], powers, rates, p);
            if (obj < best_obj) {
                best_obj = obj;
                zoom_best = i;
            }
        }
        eta_best = zoom[static_cast<std::size_t>(zoom_best)];
        lo = zoom[static_cast<std::size_t>(std::max(0, zoom_best - 1))];
        hi = zoom[static_cast<std::size_t>(std::min(kZoomPoints - 1, zoom_best + 1))];
    }
    profile_at_eta(eta_best, powers, rates, p);
    Eigen::Matrix<double, 6, 1> theta;
    theta[0] = logit(std::clamp(eta_best, 1e-12, 1.0 - 1e-12));
    for (int k = 0; k < 5; ++k) {
        theta[k + 1] = logit(std::clamp(p[k], 1e-12, 1.0 - 1e-12));
    }
    return theta;
}

std::string describe_setting(const DetectorSetting& s) {
    return "setting " + std::to_string(s.index) + " (tuning " + std::to_string(s.tuning) + ")";
}

}  // namespace

void CountRateSurface::validate() const {
    if (settings.empty()) throw std::invalid_argument("surface has no settings");
    if (powers.empty()) throw std::invalid_argument("surface has no powers");
    if (rates.rows() != static_cast<Eigen::Index>(settings.size()) ||
        rates.cols() != static_cast<Eigen::Index>(powers.size())) {
        throw std::invalid_argument("rate matrix is " + std::to_string(rates.rows()) + "x" +
                                    std::to_string(rates.cols()) + " but the grid is " +
                                    std::to_string(settings.size()) + " settings x " +
                                    std::to_string(powers.size()) + " powers");
    }
    for (std::size_t j = 0; j < powers.size(); ++j) {
        if (!(powers[j] > 0.0) || !std::isfinite(powers[j])) {
            throw std::invalid_argument("power " + std::to_string(j) + " must be finite and > 0");
        }
        if (j > 0 && !(powers[j] > powers[j - 1])) {
            throw std::invalid_argument("powers must be strictly increasing (violated at index " +
                                        std::to_string(j) + ")");
        }
    }
    for (Eigen::Index i = 0; i < rates.rows(); ++i) {
        for (Eigen::Index j = 0; j < rates.cols(); ++j) {
            const double v = rates(i, j);
            if (!(v >= 0.0 && v <= 1.0)) {
                throw std::invalid_argument("rate out of [0, 1] at setting " + std::to_string(i) +
                                            ", power index " + std::to_string(j));
            }
        }
    }
    if (pulses < 0) throw std::invalid_argument("pulse count must be >= 0");
}

CountRateSurface grid_by_current(const CountRateSurface& raw, const std::vector<double>& grid) {
    raw.validate();
    if (grid.empty()) throw std::invalid_argument("empty current grid");
    const std::size_t m = raw.settings.size();
    for (std::size_t i = 1; i < m; ++i) {
        if (!(raw.settings[i].tuning > raw.settings[i - 1].tuning)) {
            throw std::invalid_argument("raw settings must be sorted by strictly increasing "
                                        "tuning for interpolation");
        }
    }
    const double lo = raw.settings.front().tuning;
    const double hi = raw.settings.back().tuning;
    CountRateSurface out;
    out.powers = raw.powers;
    out.pulses = raw.pulses;
    out.rates.resize(static_cast<Eigen::Index>(grid.size()), raw.rates.cols());
    out.settings.reserve(grid.size());
    for (std::size_t g = 0; g < grid.size(); ++g) {
        const double current = grid[g];
        if (!(current >= lo && current <= hi)) {
            throw std::invalid_argument("grid point " + std::to_string(current) +
                                        " lies outside the measured span [" + std::to_string(lo) +
                                        ", " + std::to_string(hi) +
                                        "]; extrapolation is not permitted");
        }
        out.settings.push_back(DetectorSetting{current, static_cast<int>(g)});
        // Exact hits copy the measured row bit for bit.
        std::size_t upper = 0;
        while (upper < m && raw.settings[upper].tuning < current) ++upper;
        if (upper < m && raw.settings[upper].tuning == current) {
            out.rates.row(static_cast<Eigen::Index>(g)) =
                raw.rates.row(static_cast<Eigen::Index>(upper));
            continue;
        }
        const std::size_t right = upper;
        const std::size_t left = upper - 1;
        const double span = raw.settings[right].tuning - raw.settings[left].tuning;
        const double t = (current - raw.settings[left].tuning) / span;
        out.rates.row(static_cast<Eigen::Index>(g)) =
            (1.0 - t) * raw.rates.row(static_cast<Eigen::Index>(left)) +
            t * raw.rates.row(static_cast<Eigen::Index>(right));
    }
    return out;
}

SettingFit fit_setting(const std::vector<double>& powers, const std::vector<double>& rates) {
    if (powers.size() != rates.size()) {
        throw std::invalid_argument("powers and rates differ in length");
    }
    if (powers.size() < 6) {
        throw std::invalid_argument("underdetermined fit: at least 6 power points are required "
                                    "for the 6 parameters (eta, p0..p4)");
    }
    for (std::size_t j = 0; j < powers.size(); ++j) {
        if (!(powers[j] > 0.0) || !std::isfinite(powers[j])) {
            throw std::invalid_argument("power " + std::to_string(j) + " must be finite and > 0");
        }
        if (j > 0 && !(powers[j] > powers[j - 1])) {
            throw std::invalid_argument("powers must be strictly increasing");
        }
        if (!(rates[j] >= 0.0 && rates[j] <= 1.0)) {
            throw std::invalid_argument("rate " + std::to_string(j) + " is outside [0, 1]");
        }
    }
    if (powers.back() < 100.0 * powers.front() * (1.0 - 1e-12)) {
        throw std::invalid_argument("power points must span at least two decades");
    }

    const double max_rate = *std::max_element(rates.begin(), rates.end());
    const double min_rate = *std::min_element(rates.begin(), rates.end());
    if (max_rate == 0.0) {
        throw std::runtime_error("degenerate data: every click rate is zero");
    }
    if (max_rate == min_rate) {
        // Power-independent response: eta cannot be identified, the constant
        // is a pure dark count.
        SettingFit fit;
        fit.response.eta = 0.0;
        fit.response.p = {max_rate, 1.0, 1.0, 1.0, 1.0};
        fit.residual = 0.0;
        fit.degenerate = true;
        fit.warnings.push_back("constant click rate: eta unidentifiable, treating the level as a "
                               "dark count");
        return fit;
    }

    // The profiled scan lands inside the global basin, which is too narrow for
    // corner starts alone to reach (the descent stalls in shallow side minima
    // when eta is far off).
    Eigen::Matrix<double, 6, 1> best = profiled_start(powers, rates);
    double best_obj = minimize_from(best, powers, rates);

    // Deterministic multi-start lattice: two eta scales crossed with four
    // threshold patterns of the p-vector (hard 0/1 values pulled to 1e-3 off
    // the bounds so the logit transform stays finite).
    const double p_lo = logit(1e-3);
    const double p_hi = logit(1.0 - 1e-3);
    const std::array<double, 2> eta_starts{logit(0.01), logit(0.5)};
    const std::array<std::array<double, 5>, 4> p_starts{{
        {p_lo, p_hi, p_hi, p_hi, p_hi},
        {p_lo, p_lo, p_hi, p_hi, p_hi},
        {p_lo, p_lo, p_lo, p_hi, p_hi},
        {p_lo, p_lo, p_lo, p_lo, p_hi},
    }};
    for (double eta_start : eta_starts) {
        for (const auto& p_start : p_starts) {
            if (best_obj < 1e-24) break;  // already at numerical floor
            Eigen::Matrix<double, 6, 1> theta;
            theta[0] = eta_start;
            for (int k = 0; k < 5; ++k) theta[k + 1] = p_start[static_cast<std::size_t>(k)];
            const double obj = minimize_from(theta, powers, rates);
            if (obj < best_obj) {
                best_obj = obj;
                best = theta;
            }
        }
    }

    SettingFit fit;
    fit.response = unpack(best);
    fit.residual = std::sqrt(best_obj / static_cast<double>(powers.size()));
    for (std::size_t k = 0; k + 1 < 5; ++k) {
        if (fit.response.p[k] > fit.response.p[k + 1] + 0.05) {
            fit.warnings.push_back("non-monotonic response: p" + std::to_string(k) +
                                   " exceeds p" + std::to_string(k + 1) + " by more than 0.05");
        }
    }
    return fit;
}

TomographyFit fit_all(const CountRateSurface& surface, int n_mr) {
    surface.validate();
    if (n_mr < 4) throw std::invalid_argument("POVM assembly needs n_mr >= 4");
    const auto n_settings = static_cast<Eigen::Index>(surface.settings.size());
    std::vector<SettingFit> fits;
    fits.reserve(surface.settings.size());
    Eigen::MatrixXd elements(n_settings, n_mr + 1);
    std::vector<double> row(surface.powers.size());
    for (Eigen::Index i = 0; i < n_settings; ++i) {
        for (std::size_t j = 0; j < surface.powers.size(); ++j) {
            row[j] = surface.rates(i, static_cast<Eigen::Index>(j));
        }
        try {
            fits.push_back(fit_setting(surface.powers, row));
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument(
                describe_setting(surface.settings[static_cast<std::size_t>(i)]) + ": " + e.what());
        } catch (const std::runtime_error& e) {
            throw std::runtime_error(
                describe_setting(surface.settings[static_cast<std::size_t>(i)]) + ": " + e.what());
        }
        elements.row(i) = assemble_povm_row(fits.back().response, n_mr).transpose();
    }
    return TomographyFit{std::move(fits), Povm(surface.settings, std::move(elements))};
}

}  // namespace clicktomo
