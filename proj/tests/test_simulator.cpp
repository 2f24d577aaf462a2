#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "clicktomo/povm.hpp"
#include "clicktomo/reconstruction.hpp"
#include "clicktomo/simulator.hpp"
#include "clicktomo/util.hpp"

using namespace clicktomo;

namespace {

const std::vector<double> kCurrents{6.0, 8.0, 10.0, 12.0, 13.0};

std::vector<double> short_powers() { return logspace(0.05, 4.1e4, 12); }

}  // namespace

TEST_CASE("detector parameters are validated before use") {
    SyntheticDetector det = SyntheticDetector::default_sspd();
    det.validate();
    det.eta0 = 0.0;
    CHECK_THROWS_AS(det.validate(), std::invalid_argument);
    det = SyntheticDetector::default_sspd();
    det.transition_width = 0.0;
    CHECK_THROWS_AS(det.validate(), std::invalid_argument);
    det = SyntheticDetector::default_sspd();
    det.dark0 = -0.1;
    CHECK_THROWS_AS(det.validate(), std::invalid_argument);
}

TEST_CASE("bias currents far below every threshold give a dead detector") {
    const SyntheticDetector det = SyntheticDetector::default_sspd();
    const NonlinearResponse resp = synthetic_response(det, 0.5);
    CHECK(resp.eta == det.eta0);
    CHECK(resp.p[0] < 1e-9);
    for (std::size_t k = 1; k < 5; ++k) CHECK(resp.p[k] < 1e-4);
}

TEST_CASE("biasing exactly at a registering threshold gives even odds") {
    SyntheticDetector det = SyntheticDetector::default_sspd();
    det.threshold_currents = {10.0, 9.0, 8.0, 7.0};
    const NonlinearResponse resp = synthetic_response(det, 10.0);
    CHECK(resp.p[1] == 0.5);
}

TEST_CASE("registering probabilities rise with bias current and photon count") {
    const SyntheticDetector det = SyntheticDetector::default_sspd();
    NonlinearResponse previous = synthetic_response(det, 5.0);
    for (double current : {6.0, 7.5, 9.0, 11.0, 13.0, 14.0}) {
        const NonlinearResponse resp = synthetic_response(det, current);
        CHECK(resp.p[0] > previous.p[0]);
        for (std::size_t k = 1; k < 5; ++k) CHECK(resp.p[k] > previous.p[k]);
        // More absorbed photons never click less often.
        for (std::size_t k = 2; k < 5; ++k) CHECK(resp.p[k] >= resp.p[k - 1]);
        previous = resp;
    }
}

TEST_CASE("bias currents outside the superconducting window are refused") {
    const SyntheticDetector det = SyntheticDetector::default_sspd();
    CHECK_THROWS_AS(synthetic_response(det, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(synthetic_response(det, -2.0), std::invalid_argument);
    CHECK_THROWS_AS(synthetic_response(det, det.critical_current), std::invalid_argument);
}

TEST_CASE("closed-form rates agree with the response model") {
    const SyntheticDetector det = SyntheticDetector::default_sspd();
    for (double current : kCurrents) {
        const NonlinearResponse resp = synthetic_response(det, current);
        for (double mean : {0.05, 2.5, 400.0}) {
            CHECK(expected_rate(det, current, StateFamily::coherent, mean) ==
                  doctest::Approx(click_probability_coherent(resp, mean)).epsilon(1e-14));
            CHECK(expected_rate(det, current, StateFamily::thermal, mean) ==
                  doctest::Approx(click_probability_thermal(resp, mean)).epsilon(1e-14));
        }
    }
    const Eigen::VectorXd stacked =
        expected_rates(det, kCurrents, StateFamily::coherent, 2.5);
    REQUIRE(stacked.size() == static_cast<Eigen::Index>(kCurrents.size()));
    for (std::size_t i = 0; i < kCurrents.size(); ++i) {
        CHECK(stacked(static_cast<Eigen::Index>(i)) ==
              expected_rate(det, kCurrents[i], StateFamily::coherent, 2.5));
    }
}

TEST_CASE("zero-amplitude surfaces reproduce the exact rates") {
    const SyntheticDetector det = SyntheticDetector::default_sspd();
    const std::vector<double> powers = short_powers();
    const CountRateSurface surface = simulate_surface(det, kCurrents, powers, NoiseModel{});
    for (std::size_t i = 0; i < kCurrents.size(); ++i) {
        for (std::size_t j = 0; j < powers.size(); ++j) {
            CHECK(surface.rates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) ==
                  expected_rate(det, kCurrents[i], StateFamily::coherent, powers[j]));
        }
    }
}

TEST_CASE("noise draws are deterministic in the seed") {
    const SyntheticDetector det = SyntheticDetector::default_sspd();
    NoiseModel noise;
    noise.relative_amplitude = 0.02;
    noise.seed = 1234;
    const CountRateSurface a = simulate_surface(det, kCurrents, short_powers(), noise);
    const CountRateSurface b = simulate_surface(det, kCurrents, short_powers(), noise);
    CHECK((a.rates - b.rates).cwiseAbs().maxCoeff() == 0.0);
    noise.seed = 1235;
    const CountRateSurface c = simulate_surface(det, kCurrents, short_powers(), noise);
    CHECK((a.rates - c.rates).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("multiplicative noise respects its amplitude bound") {
    const SyntheticDetector det = SyntheticDetector::default_sspd();
    NoiseModel noise;
    noise.relative_amplitude = 0.06;
    noise.seed = 99;
    const std::vector<double> powers = short_powers();
    const CountRateSurface clean = simulate_surface(det, kCurrents, powers, NoiseModel{});
    const CountRateSurface noisy = simulate_surface(det, kCurrents, powers, noise);
    double largest = 0.0;
    for (Eigen::Index i = 0; i < clean.rates.rows(); ++i) {
        for (Eigen::Index j = 0; j < clean.rates.cols(); ++j) {
            const double rel = std::abs(noisy.rates(i, j) - clean.rates(i, j)) /
                               clean.rates(i, j);
            largest = std::max(largest, rel);
            CHECK(rel <= 0.06 + 1e-12);
            CHECK(noisy.rates(i, j) >= 0.0);
            CHECK(noisy.rates(i, j) <= 1.0);
        }
    }
    CHECK(largest > 0.01);  // the draw actually exercises the range
}

TEST_CASE("counting noise is deterministic and consistent with its pulse count") {
    const SyntheticDetector det = SyntheticDetector::default_sspd();
    NoiseModel noise;
    noise.relative_amplitude = 0.0;
    noise.seed = 7;
    noise.kind = NoiseKind::binomial_counts;
    const std::vector<double> powers = short_powers();
    const std::int64_t pulses = 20000;
    const CountRateSurface a = simulate_surface(det, kCurrents, powers, noise, pulses);
    const CountRateSurface b = simulate_surface(det, kCurrents, powers, noise, pulses);
    CHECK((a.rates - b.rates).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.pulses == pulses);
    for (Eigen::Index i = 0; i < a.rates.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.rates.cols(); ++j) {
            const double counts = a.rates(i, j) * static_cast<double>(pulses);
            CHECK(counts == doctest::Approx(std::round(counts)).epsilon(1e-9));
        }
    }
}

TEST_CASE("the default probe protocol spans the documented grid") {
    const TomographyProtocol protocol;
    REQUIRE(protocol.currents.size() == 165);
    REQUIRE(protocol.powers.size() == 20);
    CHECK(protocol.currents.front() == 5.0);
    CHECK(protocol.currents.back() == 13.25);
    CHECK(protocol.powers.front() == doctest::Approx(0.05).epsilon(1e-12));
    CHECK(protocol.powers.back() == doctest::Approx(4.1e4).epsilon(1e-12));
    for (std::size_t i = 1; i < protocol.powers.size(); ++i) {
        CHECK(protocol.powers[i] > protocol.powers[i - 1]);
    }
}

TEST_CASE("noiseless fidelity stays above the reconstruction floor at low mean") {
    SyntheticDetector det = SyntheticDetector::default_sspd();
    ReconstructionConfig cfg;
    cfg.iterations = 1000000;  // the coherent(2.5) plateau needs the full budget
    cfg.n_mr = 25;
    FidelityCurveOptions options;
    options.protocol.currents = linspace(5.0, 13.25, 24);
    options.protocol.powers = logspace(0.05, 4.1e4, 20);
    const std::vector<FidelityPoint> curve =
        fidelity_curve(det, StateFamily::coherent, {1.0, 2.5}, 2, NoiseModel{}, cfg, options);
    REQUIRE(curve.size() == 2);
    for (const FidelityPoint& point : curve) {
        CHECK(point.repeats_failed == 0);
        CHECK(point.repeats_ok == 2);
        CHECK(point.fidelity_mean >= 0.999);
        CHECK(point.fidelity_spread <= 1e-9);  // noiseless repeats are identical
    }
}
