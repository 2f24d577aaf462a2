#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "clicktomo/fisher.hpp"
#include "clicktomo/io.hpp"
#include "clicktomo/reconstruction.hpp"
#include "clicktomo/simulator.hpp"
#include "clicktomo/tomography.hpp"

namespace py = pybind11;
using namespace clicktomo;

PYBIND11_MODULE(_clicktomo, m) {
    m.doc() = "Click-detector tomography, photon-statistics reconstruction and "
              "Cramer-Rao error analysis";
    m.attr("__version__") = CLICKTOMO_VERSION;

    py::enum_<StateFamily>(m, "StateFamily")
        .value("coherent", StateFamily::coherent)
        .value("thermal", StateFamily::thermal);

    py::class_<FockDistribution>(m, "FockDistribution",
                                 "Diagonal photon-number probabilities, truncated at n_mr.")
        .def(py::init<>())
        .def_static("from_probabilities", &FockDistribution::from_probabilities, py::arg("probs"))
        .def_static("uniform", &FockDistribution::uniform, py::arg("n_mr"))
        .def_property_readonly("probs", &FockDistribution::probs)
        .def_property_readonly("n_mr", &FockDistribution::n_mr)
        .def("__len__", &FockDistribution::size)
        .def("__getitem__", [](const FockDistribution& d, Eigen::Index n) {
            if (n < 0 || n >= d.size()) throw py::index_error();
            return d[n];
        });

    m.def("coherent_distribution", &coherent_distribution, py::arg("mean"), py::arg("n_mr"));
    m.def("thermal_distribution", &thermal_distribution, py::arg("mean"), py::arg("n_mr"));
    m.def("mean_photon_number", &mean_photon_number, py::arg("d"));
    m.def("g2_zero", &g2_zero, py::arg("d"));
    m.def("fidelity", &fidelity, py::arg("a"), py::arg("b"));
    m.def("closest_reference_state", &closest_reference_state, py::arg("d"), py::arg("family"));

    py::class_<DetectorSetting>(m, "DetectorSetting")
        .def(py::init<>())
        .def(py::init([](double tuning, int index) {
                 return DetectorSetting{tuning, index};
             }),
             py::arg("tuning"), py::arg("index") = 0)
        .def_readwrite("tuning", &DetectorSetting::tuning)
        .def_readwrite("index", &DetectorSetting::index);

    py::class_<NonlinearResponse>(m, "NonlinearResponse",
                                  "Linear efficiency eta plus per-photon click probabilities "
                                  "p[0..4]; p[0] is the dark-count probability.")
        .def(py::init<>())
        .def(py::init([](double eta, const std::array<double, 5>& p) {
                 NonlinearResponse r;
                 r.eta = eta;
                 r.p = p;
                 r.validate();
                 return r;
             }),
             py::arg("eta"), py::arg("p"))
        .def_readwrite("eta", &NonlinearResponse::eta)
        .def_readwrite("p", &NonlinearResponse::p)
        .def("validate", &NonlinearResponse::validate);

    py::class_<Povm>(m, "Povm", "Click-outcome POVM; element (setting, n) is the click "
                                "probability for the n-photon input.")
        .def(py::init<std::vector<DetectorSetting>, Eigen::MatrixXd>(), py::arg("settings"),
             py::arg("elements"))
        .def_property_readonly("settings", &Povm::settings)
        .def_property_readonly("elements", &Povm::elements)
        .def_property_readonly("n_mr", &Povm::n_mr)
        .def_property_readonly("setting_count", &Povm::setting_count);

    m.def("bernoulli_matrix", &bernoulli_matrix, py::arg("eta"), py::arg("n_mr"));
    m.def("assemble_povm_row", &assemble_povm_row, py::arg("response"), py::arg("n_mr"));
    m.def("click_probability_coherent", &click_probability_coherent, py::arg("response"),
          py::arg("mean"));
    m.def("click_probability_thermal", &click_probability_thermal, py::arg("response"),
          py::arg("mean"));
    m.def("click_probability_state", &click_probability_state, py::arg("povm_row"), py::arg("d"));
    m.def("predicted_rates", &predicted_rates, py::arg("povm"), py::arg("d"));

    py::class_<CountRateSurface>(m, "CountRateSurface")
        .def(py::init<>())
        .def_readwrite("settings", &CountRateSurface::settings)
        .def_readwrite("powers", &CountRateSurface::powers)
        .def_readwrite("rates", &CountRateSurface::rates)
        .def_readwrite("pulses", &CountRateSurface::pulses)
        .def("validate", &CountRateSurface::validate);

    m.def("grid_by_current", &grid_by_current, py::arg("raw"), py::arg("grid"));

    py::class_<SettingFit>(m, "SettingFit")
        .def_readonly("response", &SettingFit::response)
        .def_readonly("residual", &SettingFit::residual)
        .def_readonly("degenerate", &SettingFit::degenerate)
        .def_readonly("warnings", &SettingFit::warnings);

    m.def("fit_setting", &fit_setting, py::arg("powers"), py::arg("rates"));

    py::class_<TomographyFit>(m, "TomographyFit")
        .def_readonly("fits", &TomographyFit::fits)
        .def_readonly("povm", &TomographyFit::povm);

    m.def("fit_all", &fit_all, py::arg("surface"), py::arg("n_mr"));

    py::class_<ReconstructionConfig>(m, "ReconstructionConfig")
        .def(py::init<>())
        .def_readwrite("iterations", &ReconstructionConfig::iterations)
        .def_readwrite("early_stop_delta", &ReconstructionConfig::early_stop_delta)
        .def_readwrite("n_mr", &ReconstructionConfig::n_mr)
        .def_readwrite("include_no_click", &ReconstructionConfig::include_no_click)
        .def_readwrite("trace_stride", &ReconstructionConfig::trace_stride)
        .def("validate", &ReconstructionConfig::validate);

    m.def("em_step", &em_step, py::arg("rho"), py::arg("povm"), py::arg("measured"),
          py::arg("include_no_click") = true);

    py::class_<ReconstructionResult>(m, "ReconstructionResult")
        .def_readonly("rho", &ReconstructionResult::rho)
        .def_readonly("loglik_trace", &ReconstructionResult::loglik_trace)
        .def_readonly("iterations_run", &ReconstructionResult::iterations_run)
        .def_readonly("predicted", &ReconstructionResult::predicted)
        .def_readonly("config", &ReconstructionResult::config);

    m.def("reconstruct", &reconstruct, py::arg("povm"), py::arg("measured"),
          py::arg("cfg") = ReconstructionConfig{});
    m.def("log_likelihood", &log_likelihood, py::arg("povm"), py::arg("rho"), py::arg("measured"));
    m.def("chi_square", &chi_square, py::arg("measured"), py::arg("predicted"),
          py::arg("relative_error"));

    py::enum_<FamilyVerdict>(m, "FamilyVerdict")
        .value("coherent", FamilyVerdict::coherent)
        .value("thermal", FamilyVerdict::thermal)
        .value("undecided", FamilyVerdict::undecided);

    py::class_<ClassificationResult>(m, "ClassificationResult")
        .def_readonly("verdict", &ClassificationResult::verdict)
        .def_readonly("chi2_coherent", &ClassificationResult::chi2_coherent)
        .def_readonly("chi2_thermal", &ClassificationResult::chi2_thermal)
        .def_readonly("reconstructed", &ClassificationResult::reconstructed);

    m.def("classify_family", &classify_family, py::arg("povm"), py::arg("measured"),
          py::arg("relative_error"), py::arg("cfg") = ReconstructionConfig{});

    py::class_<MeasurementBudget>(m, "MeasurementBudget")
        .def(py::init<>())
        .def_static("uniform_split", &MeasurementBudget::uniform_split, py::arg("total_shots"),
                    py::arg("n_settings"))
        .def_readwrite("total_shots", &MeasurementBudget::total_shots)
        .def_readwrite("shots_per_setting", &MeasurementBudget::shots_per_setting)
        .def("validate", &MeasurementBudget::validate);

    m.def("fisher_matrix", &fisher_matrix, py::arg("povm"), py::arg("rho"), py::arg("budget"));

    py::class_<CrbOptions>(m, "CrbOptions")
        .def(py::init<>())
        .def_readwrite("constrained", &CrbOptions::constrained)
        .def_readwrite("cutoff", &CrbOptions::cutoff);

    py::class_<CrbReport>(m, "CrbReport")
        .def_readonly("sigma", &CrbReport::sigma)
        .def_readonly("relative", &CrbReport::relative)
        .def_readonly("condition_flag", &CrbReport::condition_flag)
        .def_readonly("dropped", &CrbReport::dropped);

    m.def("crb_errors", &crb_errors, py::arg("fisher"), py::arg("rho"),
          py::arg("options") = CrbOptions{});
    m.def("linear_apd_povm", &linear_apd_povm, py::arg("eta"), py::arg("transmissions"),
          py::arg("n_mr"));
    m.def("compare_detectors", &compare_detectors, py::arg("a"), py::arg("b"), py::arg("rho"),
          py::arg("budget"));

    py::class_<SyntheticDetector>(m, "SyntheticDetector")
        .def(py::init<>())
        .def_static("default_sspd", &SyntheticDetector::default_sspd)
        .def_readwrite("critical_current", &SyntheticDetector::critical_current)
        .def_readwrite("threshold_currents", &SyntheticDetector::threshold_currents)
        .def_readwrite("transition_width", &SyntheticDetector::transition_width)
        .def_readwrite("eta0", &SyntheticDetector::eta0)
        .def_readwrite("dark0", &SyntheticDetector::dark0)
        .def("validate", &SyntheticDetector::validate);

    py::enum_<NoiseKind>(m, "NoiseKind")
        .value("uniform_relative", NoiseKind::uniform_relative)
        .value("binomial_counts", NoiseKind::binomial_counts);

    py::class_<NoiseModel>(m, "NoiseModel")
        .def(py::init<>())
        .def_readwrite("relative_amplitude", &NoiseModel::relative_amplitude)
        .def_readwrite("seed", &NoiseModel::seed)
        .def_readwrite("kind", &NoiseModel::kind)
        .def("validate", &NoiseModel::validate);

    m.def("synthetic_response", &synthetic_response, py::arg("det"), py::arg("bias_current"));
    m.def("expected_rate", &expected_rate, py::arg("det"), py::arg("bias_current"),
          py::arg("family"), py::arg("mean"));
    m.def("expected_rates", &expected_rates, py::arg("det"), py::arg("currents"),
          py::arg("family"), py::arg("mean"));
    m.def("simulate_surface", &simulate_surface, py::arg("det"), py::arg("currents"),
          py::arg("powers"), py::arg("noise"), py::arg("pulses") = 1000000);

    py::class_<TomographyProtocol>(m, "TomographyProtocol")
        .def(py::init<>())
        .def_readwrite("currents", &TomographyProtocol::currents)
        .def_readwrite("powers", &TomographyProtocol::powers);

    py::class_<FidelityPoint>(m, "FidelityPoint")
        .def_readonly("mean", &FidelityPoint::mean)
        .def_readonly("fidelity_mean", &FidelityPoint::fidelity_mean)
        .def_readonly("fidelity_spread", &FidelityPoint::fidelity_spread)
        .def_readonly("repeats_ok", &FidelityPoint::repeats_ok)
        .def_readonly("repeats_failed", &FidelityPoint::repeats_failed);

    py::class_<FidelityCurveOptions>(m, "FidelityCurveOptions")
        .def(py::init<>())
        .def_readwrite("protocol", &FidelityCurveOptions::protocol)
        .def_readwrite("refit_per_repeat", &FidelityCurveOptions::refit_per_repeat);

    m.def("fidelity_curve", &fidelity_curve, py::arg("det"), py::arg("family"), py::arg("means"),
          py::arg("repeats"), py::arg("noise"), py::arg("cfg"),
          py::arg("options") = FidelityCurveOptions{},
          py::call_guard<py::gil_scoped_release>());

    py::class_<DatasetFile>(m, "DatasetFile")
        .def_readonly("version", &DatasetFile::version)
        .def_readonly("metadata", &DatasetFile::metadata)
        .def_readonly("surface", &DatasetFile::surface);

    m.def("load_dataset_file", &load_dataset_file, py::arg("path"));
    m.def("load_dataset", &load_dataset, py::arg("path"));
    m.def("save_dataset", &save_dataset, py::arg("surface"), py::arg("path"),
          py::arg("metadata") = std::map<std::string, std::string>{});
    m.def("save_povm", &save_povm, py::arg("fit"), py::arg("path"));
    m.def("load_povm", &load_povm, py::arg("path"));
    m.def("save_result",
          py::overload_cast<const ReconstructionResult&, const std::filesystem::path&>(
              &save_result),
          py::arg("result"), py::arg("path"));
    m.def("save_result",
          py::overload_cast<const CrbReport&, const std::filesystem::path&>(&save_result),
          py::arg("report"), py::arg("path"));
    m.def("load_reconstruction", &load_reconstruction, py::arg("path"));
    m.def("load_crb_report", &load_crb_report, py::arg("path"));
}
