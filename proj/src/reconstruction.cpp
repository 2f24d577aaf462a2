#include "clicktomo/reconstruction.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace clicktomo {

namespace {

void check_measured(const Eigen::VectorXd& measured, Eigen::Index n_settings) {
    if (measured.size() != n_settings) {
        throw std::invalid_argument("measured rate vector has " + std::to_string(measured.size()) +
                                    " entries for " + std::to_string(n_settings) + " settings");
    }
    for (Eigen::Index i = 0; i < measured.size(); ++i) {
        if (!(measured[i] >= 0.0 && measured[i] <= 1.0)) {
            throw std::invalid_argument("measured rate at setting " + std::to_string(i) +
                                        " is outside [0, 1]");
        }
    }
}

void check_support(const Eigen::VectorXd& predicted, const Eigen::VectorXd& measured,
                   bool include_no_click) {
    for (Eigen::Index i = 0; i < predicted.size(); ++i) {
        if (predicted[i] <= 0.0 && measured[i] > 0.0) {
            throw std::runtime_error("support mismatch: the state assigns zero click probability "
                                     "to setting " + std::to_string(i) + " where clicks were "
                                     "observed");
        }
        if (include_no_click && predicted[i] >= 1.0 && measured[i] < 1.0) {
            throw std::runtime_error("support mismatch: the state assigns zero no-click "
                                     "probability to setting " + std::to_string(i) +
                                     " where no-clicks were observed");
        }
    }
}

/// One multiplicative update of rho in place. `elements` may be a truncated
/// view of the POVM. Factors are accumulated per photon number; the result
/// is renormalized to unit sum.
void step_in_place(Eigen::VectorXd& rho, const Eigen::MatrixXd& elements,
                   const Eigen::VectorXd& measured, bool include_no_click,
                   Eigen::VectorXd& predicted, Eigen::VectorXd& weight, Eigen::VectorXd& factor) {
    predicted.noalias() = elements * rho;
    check_support(predicted, measured, include_no_click);
    const Eigen::Index m = measured.size();
    weight.resize(m);
    if (include_no_click) {
        // Completed outcome set: factor_n = sum_nu [Pi R/p + (1-Pi)(1-R)/(1-p)]
        //                                 = sum_nu Pi (R/p - (1-R)/(1-p)) + sum_nu (1-R)/(1-p).
        // The column normalizer is the constant setting count and folds into
        // the final renormalization. check_support guarantees the divisions.
        double no_click_total = 0.0;
        for (Eigen::Index i = 0; i < m; ++i) {
            const double click = measured[i] > 0.0 ? measured[i] / predicted[i] : 0.0;
            const double no_click =
                measured[i] < 1.0 ? (1.0 - measured[i]) / (1.0 - predicted[i]) : 0.0;
            weight[i] = click - no_click;
            no_click_total += no_click;
        }
        factor.noalias() = elements.transpose() * weight;
        factor.array() += no_click_total;
    } else {
        for (Eigen::Index i = 0; i < m; ++i) {
            weight[i] = measured[i] > 0.0 ? measured[i] / predicted[i] : 0.0;
        }
        factor.noalias() = elements.transpose() * weight;
        const Eigen::VectorXd column_sums = elements.colwise().sum();
        for (Eigen::Index n = 0; n < factor.size(); ++n) {
            // A photon number no setting responds to carries no information;
            // leave its mass untouched rather than zeroing it.
            factor[n] = column_sums[n] > 0.0 ? factor[n] / column_sums[n] : 1.0;
        }
    }
    // The rearranged sum can land a hair below zero in floats; the true
    // factor is a sum of non-negative terms, so clamping loses nothing.
    rho.array() *= factor.array().max(0.0);
    const double total = rho.sum();
    if (!(total > 0.0)) {
        throw std::runtime_error("EM update drove the state to zero mass; the data are "
                                 "inconsistent with the POVM support");
    }
    rho /= total;
}

double log_likelihood_of_rates(const Eigen::VectorXd& predicted, const Eigen::VectorXd& measured) {
    long double acc = 0.0L;
    for (Eigen::Index i = 0; i < predicted.size(); ++i) {
        const double p = std::min(std::max(predicted[i], 1e-300), 1.0 - 1e-16);
        if (measured[i] > 0.0) acc += static_cast<long double>(measured[i]) * std::log(p);
        if (measured[i] < 1.0) {
            acc += static_cast<long double>(1.0 - measured[i]) * std::log1p(-p);
        }
    }
    return static_cast<double>(acc);
}

Eigen::MatrixXd truncated_elements(const Povm& povm, int n_mr) {
    if (n_mr < 0) throw std::invalid_argument("n_mr must be >= 0");
    if (n_mr > povm.n_mr()) {
        throw std::invalid_argument("requested truncation n_mr = " + std::to_string(n_mr) +
                                    " exceeds the POVM truncation n_mr = " +
                                    std::to_string(povm.n_mr()));
    }
    return povm.elements().leftCols(n_mr + 1);
}

}  // namespace

void ReconstructionConfig::validate() const {
    if (iterations < 1) throw std::invalid_argument("iterations must be >= 1");
    if (!(early_stop_delta >= 0.0)) throw std::invalid_argument("early_stop_delta must be >= 0");
    if (n_mr < 0) throw std::invalid_argument("n_mr must be >= 0");
    if (trace_stride < 1) throw std::invalid_argument("trace_stride must be >= 1");
}

FockDistribution em_step(const FockDistribution& rho, const Povm& povm,
                         const Eigen::VectorXd& measured, bool include_no_click) {
    if (rho.size() != povm.elements().cols()) {
        throw std::invalid_argument("state truncation does not match the POVM (state size " +
                                    std::to_string(rho.size()) + ", POVM columns " +
                                    std::to_string(povm.elements().cols()) + ")");
    }
    check_measured(measured, povm.elements().rows());
    Eigen::VectorXd state = rho.probs();
    Eigen::VectorXd predicted, weight, factor;
    step_in_place(state, povm.elements(), measured, include_no_click, predicted, weight, factor);
    return FockDistribution::from_probabilities(std::move(state));
}

ReconstructionResult reconstruct(const Povm& povm, const Eigen::VectorXd& measured,
                                 const ReconstructionConfig& cfg) {
    cfg.validate();
    const Eigen::MatrixXd elements = truncated_elements(povm, cfg.n_mr);
    check_measured(measured, elements.rows());

    Eigen::VectorXd rho = Eigen::VectorXd::Constant(cfg.n_mr + 1, 1.0 / (cfg.n_mr + 1));
    Eigen::VectorXd predicted, weight, factor;
    ReconstructionResult result;
    result.config = cfg;

    predicted.noalias() = elements * rho;
    double loglik = log_likelihood_of_rates(predicted, measured);
    result.loglik_trace.push_back(loglik);

    const bool track_every_step = cfg.early_stop_delta > 0.0;
    std::int64_t it = 0;
    while (it < cfg.iterations) {
        step_in_place(rho, elements, measured, cfg.include_no_click, predicted, weight, factor);
        ++it;
        const bool at_stride = (it % cfg.trace_stride == 0) || it == cfg.iterations;
        if (track_every_step || at_stride) {
            predicted.noalias() = elements * rho;
            const double next = log_likelihood_of_rates(predicted, measured);
            if (at_stride) result.loglik_trace.push_back(next);
            if (track_every_step && next - loglik < cfg.early_stop_delta) {
                loglik = next;
                if (!at_stride) result.loglik_trace.push_back(next);
                break;
            }
            loglik = next;
        }
    }
    result.iterations_run = it;
    result.rho = FockDistribution::from_probabilities(rho);
    result.predicted = elements * result.rho.probs();
    return result;
}

double log_likelihood(const Povm& povm, const FockDistribution& rho,
                      const Eigen::VectorXd& measured) {
    if (rho.size() != povm.elements().cols()) {
        throw std::invalid_argument("state truncation does not match the POVM");
    }
    check_measured(measured, povm.elements().rows());
    const Eigen::VectorXd predicted = povm.elements() * rho.probs();
    return log_likelihood_of_rates(predicted, measured);
}

double chi_square(const Eigen::VectorXd& measured, const Eigen::VectorXd& predicted,
                  double relative_error) {
    if (measured.size() != predicted.size()) {
        throw std::invalid_argument("measured and predicted vectors differ in length");
    }
    if (!(relative_error > 0.0)) throw std::invalid_argument("relative_error must be > 0");
    long double acc = 0.0L;
    Eigen::Index counted = 0;
    for (Eigen::Index i = 0; i < measured.size(); ++i) {
        if (measured[i] == 0.0) continue;
        const double z = (measured[i] - predicted[i]) / (relative_error * measured[i]);
        acc += static_cast<long double>(z) * z;
        ++counted;
    }
    if (counted == 0) {
        throw std::runtime_error("chi-square is undefined: every measured rate is zero");
    }
    return static_cast<double>(acc / counted);
}

ClassificationResult classify_family(const Povm& povm, const Eigen::VectorXd& measured,
                                     double relative_error, const ReconstructionConfig& cfg) {
    if (!(relative_error > 0.0)) throw std::invalid_argument("relative_error must be > 0");
    ReconstructionResult recon = reconstruct(povm, measured, cfg);
    const Eigen::MatrixXd elements = truncated_elements(povm, cfg.n_mr);

    ClassificationResult out{FamilyVerdict::undecided, 0.0, 0.0, recon.rho};
    const FockDistribution coherent_ref =
        closest_reference_state(recon.rho, StateFamily::coherent);
    const FockDistribution thermal_ref = closest_reference_state(recon.rho, StateFamily::thermal);
    out.chi2_coherent = chi_square(measured, elements * coherent_ref.probs(), relative_error);
    out.chi2_thermal = chi_square(measured, elements * thermal_ref.probs(), relative_error);

    const double larger = std::max(out.chi2_coherent, out.chi2_thermal);
    if (out.chi2_coherent == out.chi2_thermal ||
        std::abs(out.chi2_coherent - out.chi2_thermal) < 0.10 * larger) {
        out.verdict = FamilyVerdict::undecided;
    } else {
        out.verdict = out.chi2_coherent < out.chi2_thermal ? FamilyVerdict::coherent
                                                           : FamilyVerdict::thermal;
    }
    return out;
}

}  // namespace clicktomo
