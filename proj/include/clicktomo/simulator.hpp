#pragma once

#include <cstdint>
#include <vector>

#include "clicktomo/reconstruction.hpp"
#include "clicktomo/tomography.hpp"

namespace clicktomo {

/// Parametric ground-truth detector: sigmoidal k-photon threshold curves plus
/// an exponentially activated dark count. threshold_currents[k-1] is the bias
/// current at which the k-photon click probability crosses 1/2; thresholds
/// decrease with k, so higher photon numbers saturate first.
struct SyntheticDetector {
    double critical_current = 14.8;  // uA
    std::array<double, 4> threshold_currents{14.3, 11.5, 9.0, 7.0};  // uA, k = 1..4
    double transition_width = 0.55;  // uA
    double eta0 = 0.2;               // absorption efficiency, current-independent
    double dark0 = 0.15;             // dark-count probability at the critical current

    /// Defaults above: absorption 20% with the one-photon registering curve
    /// still rising at the top of the 5..13.25 uA window (p1 = 0.14 at 13.3,
    /// so single-photon system efficiency is 2.8% there, dark counts 1e-2),
    /// while the 2..4-photon regimes saturate inside the window. The strong
    /// absorption makes multiphoton settings carry real information, which is
    /// what distinguishes this detector from a linearly attenuated one.
    static SyntheticDetector default_sspd() { return SyntheticDetector{}; }
    void validate() const;
};

enum class NoiseKind {
    uniform_relative,  // rate * (1 + amplitude * u), u uniform on [-1, 1]
    binomial_counts,   // counts sampled over `pulses` trials
};

struct NoiseModel {
    double relative_amplitude = 0.0;  // Delta R / R, in [0, 1)
    std::uint64_t seed = 0;
    NoiseKind kind = NoiseKind::uniform_relative;

    void validate() const;
};

/// Detector response at one bias current I:
///   p_k = 1 / (1 + exp(-(I - threshold_k) / width)) for k = 1..4,
///   p_0 = dark0 * exp((I - critical) / width), eta = eta0.
/// Requires 0 < I < critical_current.
NonlinearResponse synthetic_response(const SyntheticDetector& det, double bias_current);

/// Exact click rate of the detector at one bias current for a state of the
/// given family and mean photon number (closed forms, no truncation).
double expected_rate(const SyntheticDetector& det, double bias_current, StateFamily family,
                     double mean);
Eigen::VectorXd expected_rates(const SyntheticDetector& det, const std::vector<double>& currents,
                               StateFamily family, double mean);

/// Coherent-probe count-rate surface with multiplicative uniform noise (or
/// binomial shot noise). Deterministic given noise.seed; draws are
/// independent across grid cells in row-major order.
CountRateSurface simulate_surface(const SyntheticDetector& det, const std::vector<double>& currents,
                                  const std::vector<double>& powers, const NoiseModel& noise,
                                  std::int64_t pulses = 1000000);

/// Probe grid used to characterize the detector before reconstruction runs.
/// Defaults: 165 currents spanning 5..13.25 uA and 20 log-spaced coherent
/// probe means spanning 0.05..4.1e4 photons per pulse.
struct TomographyProtocol {
    std::vector<double> currents;
    std::vector<double> powers;
    TomographyProtocol();
};

struct FidelityPoint {
    double mean = 0.0;
    double fidelity_mean = 0.0;
    double fidelity_spread = 0.0;  // sample standard deviation over repeats
    int repeats_ok = 0;
    int repeats_failed = 0;
};

struct FidelityCurveOptions {
    TomographyProtocol protocol;
    bool refit_per_repeat = false;  // refit the POVM from fresh noisy probe data each repeat
};

/// Repeated-experiment protocol: characterize the detector by tomography
/// (once, unless refit_per_repeat), then for every mean and repeat simulate
/// noisy rates of the family state, reconstruct, and score the fidelity
/// against the closest family reference. Repeat r draws noise from sub-seed
/// noise.seed + r; per-repeat failures are counted, not propagated.
std::vector<FidelityPoint> fidelity_curve(const SyntheticDetector& det, StateFamily family,
                                          const std::vector<double>& means, int repeats,
                                          const NoiseModel& noise, const ReconstructionConfig& cfg,
                                          const FidelityCurveOptions& options = {});

}  // namespace clicktomo
