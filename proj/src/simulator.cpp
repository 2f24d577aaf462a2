#include "clicktomo/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

#include "clicktomo/util.hpp"

namespace clicktomo {

namespace {

constexpr std::int64_t kFidelityCurvePulses = 1000000;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double clamp01(double x) { return std::min(std::max(x, 0.0), 1.0); }

/// Binomial(n, p) sample. Small-variance cases walk the CDF exactly; large
/// ones take a rounded normal approximation. Both consume a fixed number of
/// uniform draws per call, keeping grid streams aligned.
std::int64_t binomial_draw(std::mt19937_64& rng, std::int64_t n, double p) {
    if (p <= 0.0) return 0;
    if (p >= 1.0) return n;
    const double mean = static_cast<double>(n) * p;
    const double variance = mean * (1.0 - p);
    if (variance >= 25.0) {
        double u1 = uniform01(rng);
        const double u2 = uniform01(rng);
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        constexpr double kTwoPi = 6.283185307179586;
        const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
        const double k = std::round(mean + std::sqrt(variance) * z);
        return static_cast<std::int64_t>(std::min(std::max(k, 0.0), static_cast<double>(n)));
    }
    const double u = uniform01(rng);
    double pmf = std::exp(static_cast<double>(n) * std::log1p(-p));
    double cdf = pmf;
    std::int64_t k = 0;
    const double odds = p / (1.0 - p);
    while (u > cdf && k < n) {
        pmf *= static_cast<double>(n - k) / static_cast<double>(k + 1) * odds;
        ++k;
        cdf += pmf;
    }
    return k;
}

double noisy_rate(double exact, const NoiseModel& noise, std::mt19937_64& rng,
                  std::int64_t pulses) {
    switch (noise.kind) {
        case NoiseKind::uniform_relative: {
            const double u = 2.0 * uniform01(rng) - 1.0;
            return clamp01(exact * (1.0 + noise.relative_amplitude * u));
        }
        case NoiseKind::binomial_counts:
            return static_cast<double>(binomial_draw(rng, pulses, exact)) /
                   static_cast<double>(pulses);
    }
    throw std::invalid_argument("unknown noise kind");
}

}  // namespace

void SyntheticDetector::validate() const {
    if (!(critical_current > 0.0)) throw std::invalid_argument("critical current must be > 0");
    if (!(transition_width > 0.0)) throw std::invalid_argument("transition width must be > 0");
    if (!(threshold_currents[3] > 0.0)) {
        throw std::invalid_argument("threshold currents must be > 0");
    }
    for (int k = 0; k < 3; ++k) {
        if (!(threshold_currents[static_cast<std::size_t>(k)] >
              threshold_currents[static_cast<std::size_t>(k) + 1])) {
            throw std::invalid_argument("threshold currents must be strictly decreasing in "
                                        "photon number");
        }
    }
    if (!(threshold_currents[0] < critical_current)) {
        throw std::invalid_argument("threshold currents must lie below the critical current");
    }
    if (!(eta0 > 0.0 && eta0 <= 1.0)) throw std::invalid_argument("eta0 must lie in (0, 1]");
    if (!(dark0 >= 0.0 && dark0 <= 1.0)) throw std::invalid_argument("dark0 must lie in [0, 1]");
}

void NoiseModel::validate() const {
    if (!(relative_amplitude >= 0.0 && relative_amplitude < 1.0)) {
        throw std::invalid_argument("relative noise amplitude must lie in [0, 1)");
    }
}

NonlinearResponse synthetic_response(const SyntheticDetector& det, double bias_current) {
    det.validate();
    if (!(bias_current > 0.0 && bias_current < det.critical_current)) {
        throw std::invalid_argument("bias current must lie in (0, critical_current)");
    }
    NonlinearResponse resp;
    resp.eta = det.eta0;
    resp.p[0] = det.dark0 * std::exp((bias_current - det.critical_current) / det.transition_width);
    for (int k = 1; k <= 4; ++k) {
        resp.p[static_cast<std::size_t>(k)] = sigmoid(
            (bias_current - det.threshold_currents[static_cast<std::size_t>(k - 1)]) /
            det.transition_width);
    }
    return resp;
}

double expected_rate(const SyntheticDetector& det, double bias_current, StateFamily family,
                     double mean) {
    const NonlinearResponse resp = synthetic_response(det, bias_current);
    switch (family) {
        case StateFamily::coherent: return click_probability_coherent(resp, mean);
        case StateFamily::thermal: return click_probability_thermal(resp, mean);
    }
    throw std::invalid_argument("unknown state family");
}

Eigen::VectorXd expected_rates(const SyntheticDetector& det, const std::vector<double>& currents,
                               StateFamily family, double mean) {
    Eigen::VectorXd rates(static_cast<Eigen::Index>(currents.size()));
    for (std::size_t i = 0; i < currents.size(); ++i) {
        rates[static_cast<Eigen::Index>(i)] = expected_rate(det, currents[i], family, mean);
    }
    return rates;
}

CountRateSurface simulate_surface(const SyntheticDetector& det,
                                  const std::vector<double>& currents,
                                  const std::vector<double>& powers, const NoiseModel& noise,
                                  std::int64_t pulses) {
    det.validate();
    noise.validate();
    if (currents.empty()) throw std::invalid_argument("no bias currents given");
    if (powers.empty()) throw std::invalid_argument("no probe powers given");
    if (noise.kind == NoiseKind::binomial_counts && pulses < 1) {
        throw std::invalid_argument("binomial noise needs pulses >= 1");
    }
    if (pulses < 0) throw std::invalid_argument("pulse count must be >= 0");

    CountRateSurface surface;
    surface.powers = powers;
    surface.pulses = pulses;
    surface.settings.reserve(currents.size());
    surface.rates.resize(static_cast<Eigen::Index>(currents.size()),
                         static_cast<Eigen::Index>(powers.size()));
    std::mt19937_64 rng(noise.seed);
    for (std::size_t i = 0; i < currents.size(); ++i) {
        surface.settings.push_back(DetectorSetting{currents[i], static_cast<int>(i)});
        const NonlinearResponse resp = synthetic_response(det, currents[i]);
        for (std::size_t j = 0; j < powers.size(); ++j) {
            const double exact = click_probability_coherent(resp, powers[j]);
            surface.rates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                noisy_rate(exact, noise, rng, pulses);
        }
    }
    surface.validate();
    return surface;
}

TomographyProtocol::TomographyProtocol()
    : currents(linspace(5.0, 13.25, 165)), powers(logspace(0.05, 4.1e4, 20)) {}

std::vector<FidelityPoint> fidelity_curve(const SyntheticDetector& det, StateFamily family,
                                          const std::vector<double>& means, int repeats,
                                          const NoiseModel& noise, const ReconstructionConfig& cfg,
                                          const FidelityCurveOptions& options) {
    det.validate();
    noise.validate();
    cfg.validate();
    if (repeats < 1) throw std::invalid_argument("repeats must be >= 1");
    if (means.empty()) throw std::invalid_argument("no mean photon numbers given");
    for (double mean : means) {
        if (!(mean >= 0.0) || !std::isfinite(mean)) {
            throw std::invalid_argument("mean photon numbers must be finite and >= 0");
        }
    }

    std::optional<Povm> shared_povm;
    if (!options.refit_per_repeat) {
        NoiseModel quiet;
        quiet.seed = noise.seed;
        const CountRateSurface surface =
            simulate_surface(det, options.protocol.currents, options.protocol.powers, quiet);
        shared_povm.emplace(fit_all(surface, cfg.n_mr).povm);
    }

    std::vector<FidelityPoint> curve;
    curve.reserve(means.size());
    for (double mean : means) {
        FidelityPoint point;
        point.mean = mean;
        std::vector<double> fidelities;
        fidelities.reserve(static_cast<std::size_t>(repeats));
        for (int r = 0; r < repeats; ++r) {
            try {
                std::optional<Povm> refitted;
                const Povm* povm = shared_povm ? &*shared_povm : nullptr;
                if (options.refit_per_repeat) {
                    // Probe noise comes from a stream distinct from the state
                    // noise so the two stay uncorrelated per repeat.
                    NoiseModel probe_noise = noise;
                    probe_noise.seed =
                        (noise.seed ^ 0x9e3779b97f4a7c15ULL) + static_cast<std::uint64_t>(r);
                    const CountRateSurface surface = simulate_surface(
                        det, options.protocol.currents, options.protocol.powers, probe_noise);
                    refitted.emplace(fit_all(surface, cfg.n_mr).povm);
                    povm = &*refitted;
                }
                const Eigen::VectorXd exact =
                    expected_rates(det, options.protocol.currents, family, mean);
                std::mt19937_64 rng(noise.seed + static_cast<std::uint64_t>(r));
                Eigen::VectorXd measured(exact.size());
                for (Eigen::Index i = 0; i < exact.size(); ++i) {
                    measured[i] = noisy_rate(exact[i], noise, rng, kFidelityCurvePulses);
                }
                const ReconstructionResult recon = reconstruct(*povm, measured, cfg);
                const FockDistribution reference = closest_reference_state(recon.rho, family);
                fidelities.push_back(fidelity(recon.rho, reference));
            } catch (const std::exception&) {
                ++point.repeats_failed;
            }
        }
        point.repeats_ok = static_cast<int>(fidelities.size());
        if (!fidelities.empty()) {
            double sum = 0.0;
            for (double f : fidelities) sum += f;
            point.fidelity_mean = sum / static_cast<double>(fidelities.size());
            if (fidelities.size() > 1) {
                double ss = 0.0;
                for (double f : fidelities) {
                    ss += (f - point.fidelity_mean) * (f - point.fidelity_mean);
                }
                point.fidelity_spread =
                    std::sqrt(ss / static_cast<double>(fidelities.size() - 1));
            }
        }
        curve.push_back(point);
    }
    return curve;
}

}  // namespace clicktomo
