#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "clicktomo/povm.hpp"
#include "clicktomo/simulator.hpp"
#include "clicktomo/tomography.hpp"
#include "clicktomo/util.hpp"

using namespace clicktomo;

namespace {

std::vector<double> probe_powers() { return logspace(0.05, 4e4, 20); }

std::vector<double> noiseless_curve(const NonlinearResponse& resp,
                                    const std::vector<double>& powers) {
    std::vector<double> rates(powers.size());
    for (std::size_t j = 0; j < powers.size(); ++j) {
        rates[j] = click_probability_coherent(resp, powers[j]);
    }
    return rates;
}

double max_param_error(const NonlinearResponse& a, const NonlinearResponse& b) {
    double worst = std::abs(a.eta - b.eta);
    for (std::size_t k = 0; k < 5; ++k) worst = std::max(worst, std::abs(a.p[k] - b.p[k]));
    return worst;
}

CountRateSurface three_row_surface() {
    CountRateSurface s;
    s.settings = {{5.0, 0}, {6.0, 1}, {7.0, 2}};
    s.powers = {1.0, 10.0, 100.0};
    s.rates.resize(3, 3);
    s.rates << 0.01, 0.02, 0.03,
               0.10, 0.20, 0.30,
               0.40, 0.50, 0.60;
    return s;
}

}  // namespace

TEST_CASE("surface validation rejects malformed inputs") {
    CountRateSurface s = three_row_surface();
    s.validate();
    CountRateSurface bad = s;
    bad.settings.clear();
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = s;
    bad.powers = {1.0, 10.0};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = s;
    bad.powers = {1.0, 10.0, 10.0};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = s;
    bad.rates(1, 1) = 1.5;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = s;
    bad.pulses = -1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("regridding copies exact hits bit for bit") {
    const CountRateSurface s = three_row_surface();
    const CountRateSurface out = grid_by_current(s, {5.0, 7.0});
    REQUIRE(out.settings.size() == 2);
    CHECK(out.settings[0].tuning == 5.0);
    CHECK(out.settings[1].tuning == 7.0);
    CHECK(out.settings[1].index == 1);
    CHECK((out.rates.row(0) - s.rates.row(0)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((out.rates.row(1) - s.rates.row(2)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(out.powers == s.powers);
    CHECK(out.pulses == s.pulses);
}

TEST_CASE("regridding interpolates linearly between neighbours") {
    const CountRateSurface s = three_row_surface();
    const CountRateSurface out = grid_by_current(s, {5.5, 6.75});
    const Eigen::RowVector3d mid = 0.5 * (s.rates.row(0) + s.rates.row(1));
    CHECK((out.rates.row(0) - mid).cwiseAbs().maxCoeff() <= 1e-15);
    const Eigen::RowVector3d blend = 0.25 * s.rates.row(1) + 0.75 * s.rates.row(2);
    CHECK((out.rates.row(1) - blend).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("regridding refuses extrapolation and unsorted input") {
    const CountRateSurface s = three_row_surface();
    CHECK_THROWS_AS(grid_by_current(s, {4.9}), std::invalid_argument);
    CHECK_THROWS_AS(grid_by_current(s, {7.1}), std::invalid_argument);
    CHECK_THROWS_AS(grid_by_current(s, {}), std::invalid_argument);
    CountRateSurface shuffled = s;
    std::swap(shuffled.settings[0], shuffled.settings[1]);
    CHECK_THROWS_AS(grid_by_current(shuffled, {6.0}), std::invalid_argument);
}

TEST_CASE("curve fit rejects underdetermined or malformed data") {
    const std::vector<double> powers = probe_powers();
    NonlinearResponse truth;
    truth.eta = 0.1;
    const std::vector<double> rates = noiseless_curve(truth, powers);
    CHECK_THROWS_AS(fit_setting({1.0, 2.0, 4.0, 8.0, 16.0}, {0.1, 0.2, 0.3, 0.4, 0.5}),
                    std::invalid_argument);
    // Six points but only a factor-5 power span.
    CHECK_THROWS_AS(fit_setting({1.0, 1.5, 2.0, 3.0, 4.0, 5.0}, {0.1, 0.15, 0.2, 0.3, 0.4, 0.5}),
                    std::invalid_argument);
    std::vector<double> short_rates(rates.begin(), rates.end() - 1);
    CHECK_THROWS_AS(fit_setting(powers, short_rates), std::invalid_argument);
    std::vector<double> bad_rates = rates;
    bad_rates[3] = 1.2;
    CHECK_THROWS_AS(fit_setting(powers, bad_rates), std::invalid_argument);
}

TEST_CASE("all-zero curves are rejected, constant curves degrade to dark counts") {
    const std::vector<double> powers = probe_powers();
    const std::vector<double> zeros(powers.size(), 0.0);
    CHECK_THROWS_AS(fit_setting(powers, zeros), std::runtime_error);
    const std::vector<double> flat(powers.size(), 0.07);
    const SettingFit fit = fit_setting(powers, flat);
    CHECK(fit.degenerate);
    CHECK(fit.response.eta == 0.0);
    CHECK(fit.response.p[0] == doctest::Approx(0.07));
    CHECK(fit.residual == 0.0);
    CHECK(!fit.warnings.empty());
}

TEST_CASE("on-off detector is recovered from its noiseless curve") {
    NonlinearResponse truth;
    truth.eta = 0.028;
    const std::vector<double> powers = probe_powers();
    const SettingFit fit = fit_setting(powers, noiseless_curve(truth, powers));
    CHECK(!fit.degenerate);
    CHECK(max_param_error(fit.response, truth) <= 1e-3);
    CHECK(fit.residual < 1e-8);
}

TEST_CASE("a two-photon threshold is resolved against the one-photon level") {
    NonlinearResponse truth;
    truth.eta = 0.1;
    truth.p = {0.0, 0.0, 1.0, 1.0, 1.0};
    const std::vector<double> powers = probe_powers();
    const SettingFit fit = fit_setting(powers, noiseless_curve(truth, powers));
    CHECK(fit.response.p[1] < 0.01);
    CHECK(fit.response.p[2] > 0.99);
}

TEST_CASE("noiseless roundtrip across efficiencies and response shapes") {
    const SyntheticDetector det = SyntheticDetector::default_sspd();
    const std::vector<double> powers = probe_powers();
    for (double eta : {0.01, 0.05, 0.2, 0.5, 1.0}) {
        for (double current : {6.0, 8.5, 10.5, 12.0, 13.0}) {
            NonlinearResponse truth = synthetic_response(det, current);
            truth.eta = eta;
            const SettingFit fit = fit_setting(powers, noiseless_curve(truth, powers));
            CAPTURE(eta);
            CAPTURE(current);
            CHECK(max_param_error(fit.response, truth) <= 1e-3);
            CHECK(fit.residual < 1e-8);
        }
    }
}

TEST_CASE("fitted responses reproduce the input surface") {
    const SyntheticDetector det = SyntheticDetector::default_sspd();
    const std::vector<double> currents = linspace(5.0, 13.25, 16);
    const std::vector<double> powers = probe_powers();
    const CountRateSurface surface = simulate_surface(det, currents, powers, NoiseModel{});
    const TomographyFit fit = fit_all(surface, 30);
    REQUIRE(fit.fits.size() == currents.size());
    CHECK(fit.povm.n_mr() == 30);
    double worst = 0.0;
    for (std::size_t i = 0; i < currents.size(); ++i) {
        for (std::size_t j = 0; j < powers.size(); ++j) {
            const double measured = surface.rates(static_cast<Eigen::Index>(i),
                                                  static_cast<Eigen::Index>(j));
            const double modeled =
                click_probability_coherent(fit.fits[i].response, powers[j]);
            worst = std::max(worst, std::abs(modeled - measured) / std::max(measured, 1e-12));
        }
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("per-setting fits commute with row permutations") {
    const SyntheticDetector det = SyntheticDetector::default_sspd();
    const std::vector<double> currents = linspace(6.0, 13.0, 8);
    const CountRateSurface surface = simulate_surface(det, currents, probe_powers(), NoiseModel{});
    CountRateSurface reversed = surface;
    std::reverse(reversed.settings.begin(), reversed.settings.end());
    reversed.rates = surface.rates.colwise().reverse().eval();
    const TomographyFit forward = fit_all(surface, 20);
    const TomographyFit backward = fit_all(reversed, 20);
    for (std::size_t i = 0; i < currents.size(); ++i) {
        const NonlinearResponse& a = forward.fits[i].response;
        const NonlinearResponse& b = backward.fits[currents.size() - 1 - i].response;
        CHECK(a.eta == b.eta);
        for (std::size_t k = 0; k < 5; ++k) CHECK(a.p[k] == b.p[k]);
    }
}

TEST_CASE("noisy fits keep the identifiable efficiency and the data") {
    // Under multiplicative noise the split between eta and p[1] is weakly
    // determined (eta' > eta with p1' < 1 reproduces an on-off curve to within
    // a couple percent over six decades), so only the product eta * p[1] and
    // the curve itself are guaranteed, not eta alone.
    NonlinearResponse truth;
    truth.eta = 0.028;
    const std::vector<double> powers = probe_powers();
    const std::vector<double> clean = noiseless_curve(truth, powers);
    for (std::uint64_t seed = 1; seed <= 32; ++seed) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        std::vector<double> noisy(clean.size());
        for (std::size_t j = 0; j < clean.size(); ++j) {
            noisy[j] = std::clamp(clean[j] * (1.0 + 0.02 * u(rng)), 0.0, 1.0);
        }
        const SettingFit fit = fit_setting(powers, noisy);
        CAPTURE(seed);
        const double effective = fit.response.eta * fit.response.p[1];
        CHECK(std::abs(effective - truth.eta) / truth.eta <= 0.05);
        CHECK(fit.residual <= 0.02);
    }
}

TEST_CASE("povm assembly requires the nonlinear truncation floor") {
    const SyntheticDetector det = SyntheticDetector::default_sspd();
    const CountRateSurface surface =
        simulate_surface(det, {8.0, 9.0, 10.0, 11.0, 12.0, 13.0}, probe_powers(), NoiseModel{});
    CHECK_THROWS_AS(fit_all(surface, 3), std::invalid_argument);
}
