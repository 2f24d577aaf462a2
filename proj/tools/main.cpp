#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "clicktomo/fisher.hpp"
#include "clicktomo/io.hpp"
#include "clicktomo/reconstruction.hpp"
#include "clicktomo/simulator.hpp"
#include "clicktomo/tomography.hpp"
#include "clicktomo/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace clicktomo;

namespace {

std::string fmt(double value) { return format_double(value); }

/// Every run records what it did next to its outputs. Only relative output
/// names go in, so reruns from different directories stay byte-identical.
void write_manifest(const fs::path& out_dir, const std::string& subcommand,
                    const json& parameters, const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs, const json& seed) {
    json manifest;
    manifest["format"] = "clicktomo-manifest";
    manifest["version"] = 1;
    manifest["tool_version"] = kVersion;
    manifest["subcommand"] = subcommand;
    manifest["parameters"] = parameters;
    manifest["inputs"] = inputs;
    manifest["outputs"] = outputs;
    manifest["seed"] = seed;
    write_text_atomic(out_dir / "manifest.json", manifest.dump(2) + "\n");
}

StateFamily parse_family(const std::string& name) {
    if (name == "coherent") return StateFamily::coherent;
    if (name == "thermal") return StateFamily::thermal;
    throw std::runtime_error("unknown state family '" + name + "' (coherent or thermal)");
}

/// "coherent:2.5" or "thermal:1.0".
std::pair<StateFamily, double> parse_state(const std::string& spec) {
    const std::size_t colon = spec.find(':');
    if (colon == std::string::npos) {
        throw std::runtime_error("state must look like coherent:2.5 or thermal:1.0");
    }
    const StateFamily family = parse_family(spec.substr(0, colon));
    double mean = 0.0;
    try {
        mean = std::stod(spec.substr(colon + 1));
    } catch (const std::exception&) {
        throw std::runtime_error("cannot parse mean photon number in state '" + spec + "'");
    }
    if (!(mean >= 0.0) || !std::isfinite(mean)) {
        throw std::runtime_error("state mean photon number must be finite and >= 0");
    }
    return {family, mean};
}

struct TomoOptions {
    std::string dataset_path;
    double grid_min = 5.0;
    double grid_max = 13.25;
    int grid_count = 165;
    int n_mr = 30;
    std::string out_dir = "tomo_out";
};

int run_tomo(const TomoOptions& opt) {
    const CountRateSurface raw = load_dataset(opt.dataset_path);
    const std::vector<double> grid = opt.grid_count == 1 && opt.grid_min == opt.grid_max
                                         ? std::vector<double>{opt.grid_min}
                                         : linspace(opt.grid_min, opt.grid_max, opt.grid_count);
    const CountRateSurface gridded = grid_by_current(raw, grid);
    const TomographyFit fit = fit_all(gridded, opt.n_mr);

    const fs::path out_dir(opt.out_dir);
    fs::create_directories(out_dir);
    save_povm(fit, out_dir / "povm.json");

    std::string residuals = "index\ttuning\teta\tp0\tp1\tp2\tp3\tp4\tresidual\tdegenerate\twarnings\n";
    double max_residual = 0.0;
    for (std::size_t i = 0; i < fit.fits.size(); ++i) {
        const SettingFit& f = fit.fits[i];
        max_residual = std::max(max_residual, f.residual);
        residuals += std::to_string(fit.povm.settings()[i].index) + '\t' +
                     fmt(fit.povm.settings()[i].tuning) + '\t' + fmt(f.response.eta);
        for (double p : f.response.p) residuals += '\t' + fmt(p);
        residuals += '\t' + fmt(f.residual) + '\t' + std::string(f.degenerate ? "1" : "0") + '\t';
        for (std::size_t w = 0; w < f.warnings.size(); ++w) {
            if (w > 0) residuals += "; ";
            residuals += f.warnings[w];
        }
        residuals += '\n';
    }
    write_text_atomic(out_dir / "residuals.tsv", residuals);

    std::string curves = "tuning";
    for (int n = 0; n <= fit.povm.n_mr(); ++n) curves += "\tpi_" + std::to_string(n);
    curves += '\n';
    for (int i = 0; i < fit.povm.setting_count(); ++i) {
        curves += fmt(fit.povm.settings()[static_cast<std::size_t>(i)].tuning);
        for (int n = 0; n <= fit.povm.n_mr(); ++n) curves += '\t' + fmt(fit.povm.elements()(i, n));
        curves += '\n';
    }
    write_text_atomic(out_dir / "response_curves.tsv", curves);

    write_manifest(out_dir, "tomo",
                   json{{"grid_min", opt.grid_min},
                        {"grid_max", opt.grid_max},
                        {"grid_count", opt.grid_count},
                        {"n_mr", opt.n_mr},
                        {"out", opt.out_dir}},
                   {opt.dataset_path}, {"povm.json", "residuals.tsv", "response_curves.tsv"},
                   json());
    std::cout << "fitted " << fit.fits.size() << " settings, max residual " << fmt(max_residual)
              << "\nwrote " << (out_dir / "povm.json").string() << '\n';
    return 0;
}

struct ReconstructOptions {
    std::string povm_path;
    std::string rates_path;
    std::int64_t iterations = 1000000;
    int n_mr = 30;
    std::string family = "none";
    double relative_error = 0.02;
    double early_stop = 0.0;
    bool click_only = false;
    std::string out_dir = "reconstruct_out";
};

int run_reconstruct(const ReconstructOptions& opt) {
    const TomographyFit fit = load_povm(opt.povm_path);
    const CountRateSurface rates_surface = load_dataset(opt.rates_path);
    if (rates_surface.powers.size() != 1) {
        throw std::runtime_error("rates file must have exactly one power column (one click rate "
                                 "per setting); got " +
                                 std::to_string(rates_surface.powers.size()));
    }
    if (rates_surface.settings.size() != fit.povm.settings().size()) {
        throw std::runtime_error("rates file has " + std::to_string(rates_surface.settings.size()) +
                                 " settings, POVM has " +
                                 std::to_string(fit.povm.settings().size()));
    }
    for (std::size_t i = 0; i < rates_surface.settings.size(); ++i) {
        const double a = rates_surface.settings[i].tuning;
        const double b = fit.povm.settings()[i].tuning;
        if (std::abs(a - b) > 1e-9 * std::max({1.0, std::abs(a), std::abs(b)})) {
            throw std::runtime_error("tuning mismatch at setting " + std::to_string(i) +
                                     ": rates file has " + fmt(a) + ", POVM has " + fmt(b));
        }
    }
    const Eigen::VectorXd measured = rates_surface.rates.col(0);

    ReconstructionConfig cfg;
    cfg.iterations = opt.iterations;
    cfg.n_mr = opt.n_mr;
    cfg.early_stop_delta = opt.early_stop;
    cfg.include_no_click = !opt.click_only;
    const ReconstructionResult result = reconstruct(fit.povm, measured, cfg);

    const fs::path out_dir(opt.out_dir);
    fs::create_directories(out_dir);
    save_result(result, out_dir / "reconstruction.json");

    const FockDistribution coherent_ref =
        closest_reference_state(result.rho, StateFamily::coherent);
    const FockDistribution thermal_ref = closest_reference_state(result.rho, StateFamily::thermal);
    const Eigen::MatrixXd elements = fit.povm.elements().leftCols(cfg.n_mr + 1);
    const double chi2_coherent =
        chi_square(measured, elements * coherent_ref.probs(), opt.relative_error);
    const double chi2_thermal =
        chi_square(measured, elements * thermal_ref.probs(), opt.relative_error);

    std::string table = "n\treconstructed\tcoherent_reference\tthermal_reference\n";
    for (Eigen::Index n = 0; n < result.rho.size(); ++n) {
        table += std::to_string(n) + '\t' + fmt(result.rho[n]) + '\t' + fmt(coherent_ref[n]) +
                 '\t' + fmt(thermal_ref[n]) + '\n';
    }
    write_text_atomic(out_dir / "rho_table.tsv", table);

    std::string chi = "family\tchi_square\ncoherent\t" + fmt(chi2_coherent) + "\nthermal\t" +
                      fmt(chi2_thermal) + '\n';
    write_text_atomic(out_dir / "chi_square.tsv", chi);

    const double larger = std::max(chi2_coherent, chi2_thermal);
    std::string verdict = "undecided";
    if (chi2_coherent != chi2_thermal && std::abs(chi2_coherent - chi2_thermal) >= 0.10 * larger) {
        verdict = chi2_coherent < chi2_thermal ? "coherent" : "thermal";
    }

    json summary;
    summary["mean_photon_number"] = mean_photon_number(result.rho);
    summary["chi2_coherent"] = chi2_coherent;
    summary["chi2_thermal"] = chi2_thermal;
    summary["verdict"] = verdict;
    summary["iterations_run"] = result.iterations_run;
    if (opt.family != "none") {
        const StateFamily family = parse_family(opt.family);
        const FockDistribution& ref =
            family == StateFamily::coherent ? coherent_ref : thermal_ref;
        summary["family"] = opt.family;
        summary["fidelity"] = fidelity(result.rho, ref);
    } else {
        summary["family"] = nullptr;
        summary["fidelity"] = nullptr;
    }
    write_text_atomic(out_dir / "summary.json", summary.dump(2) + "\n");

    write_manifest(out_dir, "reconstruct",
                   json{{"iterations", opt.iterations},
                        {"n_mr", opt.n_mr},
                        {"family", opt.family},
                        {"relative_error", opt.relative_error},
                        {"early_stop", opt.early_stop},
                        {"click_only", opt.click_only},
                        {"out", opt.out_dir}},
                   {opt.povm_path, opt.rates_path},
                   {"reconstruction.json", "rho_table.tsv", "chi_square.tsv", "summary.json"},
                   json());

    std::cout << "mean photon number = " << fmt(mean_photon_number(result.rho)) << '\n';
    if (!summary["fidelity"].is_null()) {
        std::cout << "fidelity (" << opt.family
                  << " reference) = " << fmt(summary["fidelity"].get<double>()) << '\n';
    }
    std::cout << "chi2 coherent = " << fmt(chi2_coherent) << ", thermal = " << fmt(chi2_thermal)
              << ", verdict = " << verdict << '\n';
    return 0;
}

struct SimulateOptions {
    std::string family = "coherent";
    std::vector<double> means{1.0, 2.5, 5.0, 10.0};
    int repeats = 30;
    double noise = -1.0;  // resolved by family when negative
    std::uint64_t seed = 0;
    std::int64_t iterations = 1000000;
    int n_mr = 30;
    double early_stop = 0.0;
    bool refit_per_repeat = false;
    std::string out_dir = "simulate_out";
};

int run_simulate(const SimulateOptions& opt) {
    const StateFamily family = parse_family(opt.family);
    const double noise_amplitude =
        opt.noise >= 0.0 ? opt.noise : (family == StateFamily::coherent ? 0.02 : 0.06);

    NoiseModel noise;
    noise.relative_amplitude = noise_amplitude;
    noise.seed = opt.seed;
    ReconstructionConfig cfg;
    cfg.iterations = opt.iterations;
    cfg.n_mr = opt.n_mr;
    cfg.early_stop_delta = opt.early_stop;
    FidelityCurveOptions options;
    options.refit_per_repeat = opt.refit_per_repeat;

    const std::vector<FidelityPoint> curve = fidelity_curve(
        SyntheticDetector::default_sspd(), family, opt.means, opt.repeats, noise, cfg, options);

    const fs::path out_dir(opt.out_dir);
    fs::create_directories(out_dir);
    std::string table = "mean\tfidelity_mean\tfidelity_spread\trepeats_ok\trepeats_failed\n";
    for (const FidelityPoint& point : curve) {
        table += fmt(point.mean) + '\t' + fmt(point.fidelity_mean) + '\t' +
                 fmt(point.fidelity_spread) + '\t' + std::to_string(point.repeats_ok) + '\t' +
                 std::to_string(point.repeats_failed) + '\n';
    }
    write_text_atomic(out_dir / "fidelity_curve.tsv", table);

    json means = json::array();
    for (double m : opt.means) means.push_back(m);
    write_manifest(out_dir, "simulate",
                   json{{"family", opt.family},
                        {"means", means},
                        {"repeats", opt.repeats},
                        {"noise", noise_amplitude},
                        {"iterations", opt.iterations},
                        {"n_mr", opt.n_mr},
                        {"early_stop", opt.early_stop},
                        {"refit_per_repeat", opt.refit_per_repeat},
                        {"out", opt.out_dir}},
                   {}, {"fidelity_curve.tsv"}, json(opt.seed));
    std::cout << "wrote " << (out_dir / "fidelity_curve.tsv").string() << " (" << curve.size()
              << " means x " << opt.repeats << " repeats)\n";
    return 0;
}

struct CrbOptionsCli {
    std::vector<std::string> povm_paths;
    double apd_eta = -1.0;
    std::string state = "coherent:2.5";
    std::int64_t shots = 600000000;
    int settings = 100;
    int n_mr = 30;
    bool constrained = false;
    std::string out_dir = "crb_out";
};

/// Evenly subsamples a fitted POVM down to `count` rows so a measurement
/// budget quoted for `count` settings applies.
Povm subsample_povm(const Povm& povm, int count) {
    if (count == povm.setting_count()) return povm;
    if (count > povm.setting_count()) {
        throw std::runtime_error("requested " + std::to_string(count) +
                                 " settings, POVM provides only " +
                                 std::to_string(povm.setting_count()));
    }
    std::vector<DetectorSetting> settings;
    Eigen::MatrixXd elements(count, povm.elements().cols());
    for (int i = 0; i < count; ++i) {
        const int src = count == 1 ? 0
                                   : static_cast<int>(std::llround(
                                         static_cast<double>(i) *
                                         static_cast<double>(povm.setting_count() - 1) /
                                         static_cast<double>(count - 1)));
        DetectorSetting s = povm.settings()[static_cast<std::size_t>(src)];
        s.index = i;
        settings.push_back(s);
        elements.row(i) = povm.elements().row(src);
    }
    return Povm(std::move(settings), std::move(elements));
}

int run_crb(const CrbOptionsCli& opt) {
    const auto [family, mean] = parse_state(opt.state);

    struct Detector {
        std::string label;
        Povm povm;
    };
    std::vector<Detector> detectors;
    for (const std::string& path : opt.povm_paths) {
        detectors.push_back({fs::path(path).stem().string(),
                             subsample_povm(load_povm(path).povm, opt.settings)});
    }
    int n_mr = detectors.empty() ? opt.n_mr : detectors.front().povm.n_mr();
    if (opt.apd_eta > 0.0) {
        std::vector<double> transmissions(static_cast<std::size_t>(opt.settings));
        for (int i = 0; i < opt.settings; ++i) {
            transmissions[static_cast<std::size_t>(i)] =
                static_cast<double>(i + 1) / static_cast<double>(opt.settings);
        }
        detectors.push_back({"apd", linear_apd_povm(opt.apd_eta, transmissions, n_mr)});
    }
    if (detectors.empty() || detectors.size() > 2) {
        throw std::runtime_error("give one or two detectors: up to two POVM files and/or "
                                 "--apd-eta");
    }

    const FockDistribution rho = family == StateFamily::coherent
                                     ? coherent_distribution(mean, n_mr)
                                     : thermal_distribution(mean, n_mr);
    const MeasurementBudget budget = MeasurementBudget::uniform_split(opt.shots, opt.settings);
    CrbOptions crb_options;
    crb_options.constrained = opt.constrained;

    const fs::path out_dir(opt.out_dir);
    fs::create_directories(out_dir);
    std::vector<CrbReport> reports;
    std::vector<std::string> outputs;
    for (std::size_t d = 0; d < detectors.size(); ++d) {
        reports.push_back(
            crb_errors(fisher_matrix(detectors[d].povm, rho, budget), rho, crb_options));
        const std::string name = "crb_" + (detectors.size() == 2 ? std::string(d == 0 ? "a" : "b")
                                                                 : std::string("a")) +
                                 ".json";
        save_result(reports.back(), out_dir / name);
        outputs.push_back(name);
    }

    std::string table;
    if (detectors.size() == 1) {
        table = "n\trho\tsigma\trelative\n";
        for (Eigen::Index n = 0; n < rho.size(); ++n) {
            table += std::to_string(n) + '\t' + fmt(rho[n]) + '\t' + fmt(reports[0].sigma[n]) +
                     '\t' + fmt(reports[0].relative[n]) + '\n';
        }
    } else {
        const Eigen::VectorXd ratio =
            compare_detectors(detectors[0].povm, detectors[1].povm, rho, budget);
        table = "n\trho\tsigma_a\trelative_a\tsigma_b\trelative_b\tratio\n";
        for (Eigen::Index n = 0; n < rho.size(); ++n) {
            table += std::to_string(n) + '\t' + fmt(rho[n]) + '\t' + fmt(reports[0].sigma[n]) +
                     '\t' + fmt(reports[0].relative[n]) + '\t' + fmt(reports[1].sigma[n]) + '\t' +
                     fmt(reports[1].relative[n]) + '\t' + fmt(ratio[n]) + '\n';
        }
    }
    write_text_atomic(out_dir / "crb_table.tsv", table);
    outputs.push_back("crb_table.tsv");

    json params{{"state", opt.state},         {"shots", opt.shots},
                {"settings", opt.settings},   {"n_mr", n_mr},
                {"constrained", opt.constrained}, {"apd_eta", opt.apd_eta > 0.0 ? json(opt.apd_eta) : json()},
                {"out", opt.out_dir}};
    write_manifest(out_dir, "crb", params,
                   std::vector<std::string>(opt.povm_paths.begin(), opt.povm_paths.end()), outputs,
                   json());
    std::cout << "wrote " << (out_dir / "crb_table.tsv").string() << " ("
              << (detectors.size() == 2 ? "two detectors, ratio column included"
                                        : "single detector")
              << ")\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Click-detector tomography, photon-statistics reconstruction and "
                 "Cramer-Rao error analysis"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    TomoOptions tomo;
    CLI::App* tomo_cmd =
        app.add_subcommand("tomo", "Fit per-setting detector responses and assemble the POVM");
    tomo_cmd->add_option("dataset", tomo.dataset_path, "Count-rate dataset file")->required();
    tomo_cmd->add_option("--grid-min", tomo.grid_min, "Lowest bias current of the fit grid");
    tomo_cmd->add_option("--grid-max", tomo.grid_max, "Highest bias current of the fit grid");
    tomo_cmd->add_option("--grid-count", tomo.grid_count, "Number of grid settings");
    tomo_cmd->add_option("--n-mr", tomo.n_mr, "POVM photon-number truncation");
    tomo_cmd->add_option("--out", tomo.out_dir, "Output directory");

    ReconstructOptions rec;
    CLI::App* rec_cmd = app.add_subcommand(
        "reconstruct", "Maximum-likelihood photon statistics from per-setting click rates");
    rec_cmd->add_option("povm", rec.povm_path, "Fitted POVM file")->required();
    rec_cmd->add_option("rates", rec.rates_path, "Single-power dataset of measured click rates")
        ->required();
    rec_cmd->add_option("--iterations", rec.iterations, "EM iteration budget");
    rec_cmd->add_option("--n-mr", rec.n_mr, "Reconstruction truncation");
    rec_cmd->add_option("--family", rec.family, "Reference family: coherent, thermal or none")
        ->check(CLI::IsMember({"coherent", "thermal", "none"}));
    rec_cmd->add_option("--relative-error", rec.relative_error,
                        "Relative rate error used in the chi-square score");
    rec_cmd->add_option("--early-stop", rec.early_stop,
                        "Stop when the per-iteration likelihood gain drops below this");
    rec_cmd->add_flag("--click-only", rec.click_only,
                      "Use the click-outcome-only update instead of the completed outcome pair");
    rec_cmd->add_option("--out", rec.out_dir, "Output directory");

    SimulateOptions sim;
    CLI::App* sim_cmd = app.add_subcommand(
        "simulate", "Repeated-experiment fidelity sweep on the synthetic detector");
    sim_cmd->add_option("--family", sim.family, "State family to sweep")
        ->check(CLI::IsMember({"coherent", "thermal"}));
    sim_cmd->add_option("--means", sim.means, "Mean photon numbers of the sweep")
        ->delimiter(',');
    sim_cmd->add_option("--repeats", sim.repeats, "Simulated experiments per mean");
    sim_cmd->add_option("--noise", sim.noise,
                        "Relative noise amplitude (default 0.02 coherent, 0.06 thermal)");
    sim_cmd->add_option("--seed", sim.seed, "Noise seed")->envname("CLICKTOMO_SEED");
    sim_cmd->add_option("--iterations", sim.iterations, "EM iteration budget per repeat");
    sim_cmd->add_option("--n-mr", sim.n_mr, "Reconstruction truncation");
    sim_cmd->add_option("--early-stop", sim.early_stop,
                        "Stop when the per-iteration likelihood gain drops below this");
    sim_cmd->add_flag("--refit-per-repeat", sim.refit_per_repeat,
                      "Refit the POVM from fresh noisy probe data every repeat");
    sim_cmd->add_option("--out", sim.out_dir, "Output directory");

    CrbOptionsCli crb;
    CLI::App* crb_cmd = app.add_subcommand(
        "crb", "Cramer-Rao lower bounds on reconstructed photon statistics");
    crb_cmd->add_option("povm", crb.povm_paths, "Fitted POVM file(s), at most two")
        ->expected(0, 2);
    crb_cmd->add_option("--apd-eta", crb.apd_eta,
                        "Add a linearly attenuated on/off detector of this efficiency");
    crb_cmd->add_option("--state", crb.state, "Probe state, e.g. coherent:2.5");
    crb_cmd->add_option("--shots", crb.shots, "Total measurement budget");
    crb_cmd->add_option("--settings", crb.settings, "Number of settings the budget divides over");
    crb_cmd->add_option("--n-mr", crb.n_mr, "Truncation when no POVM file fixes it");
    crb_cmd->add_flag("--constrained", crb.constrained,
                      "Project onto the unit-sum tangent space before inverting");
    crb_cmd->add_option("--out", crb.out_dir, "Output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*tomo_cmd) return run_tomo(tomo);
        if (*rec_cmd) return run_reconstruct(rec);
        if (*sim_cmd) return run_simulate(sim);
        if (*crb_cmd) return run_crb(crb);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
