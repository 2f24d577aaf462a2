#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <unistd.h>
#include <vector>

#include "clicktomo/fisher.hpp"
#include "clicktomo/io.hpp"
#include "clicktomo/povm.hpp"
#include "clicktomo/reconstruction.hpp"
#include "clicktomo/simulator.hpp"
#include "clicktomo/tomography.hpp"
#include "clicktomo/util.hpp"

using namespace clicktomo;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("clicktomo_io_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    static int& counter() {
        static int value = 0;
        return value;
    }
};

// Rates with no short decimal representation stress the round-trip.
CountRateSurface awkward_surface() {
    CountRateSurface surface;
    surface.settings = {{5.25, 0}, {7.75, 1}, {11.125, 2}};
    surface.powers = {0.05, 1.0 / 3.0, 2.5, 4.1e4};
    surface.rates.resize(3, 4);
    surface.rates << 0.1 + 0.2, 1.0 / 7.0, 1e-12, 0.999999999999,
                     std::nextafter(0.0, 1.0), 0.5, 2.0 / 3.0, 1.0,
                     1e-300, 0.25, 0.75, 0.3333333333333333;
    surface.pulses = 1000000;
    return surface;
}

bool bitwise_equal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            if (std::memcmp(&a(i, j), &b(i, j), sizeof(double)) != 0) return false;
        }
    }
    return true;
}

}  // namespace

TEST_CASE("datasets survive a save/load cycle bit for bit") {
    TempDir dir;
    const fs::path file = dir.path / "surface.tsv";
    const CountRateSurface original = awkward_surface();
    save_dataset(original, file, {{"instrument", "bench 3"}, {"operator", "io test"}});
    const DatasetFile loaded = load_dataset_file(file);
    CHECK(loaded.version == 1);
    CHECK(loaded.metadata.at("instrument") == "bench 3");
    CHECK(loaded.metadata.at("operator") == "io test");
    REQUIRE(loaded.surface.settings.size() == original.settings.size());
    for (std::size_t i = 0; i < original.settings.size(); ++i) {
        CHECK(loaded.surface.settings[i].tuning == original.settings[i].tuning);
    }
    CHECK(loaded.surface.powers == original.powers);
    CHECK(bitwise_equal(loaded.surface.rates, original.rates));
    CHECK(loaded.surface.pulses == original.pulses);
}

TEST_CASE("clicks and pulses columns define the rate exactly") {
    TempDir dir;
    const fs::path file = dir.path / "counts.tsv";
    std::ofstream out(file);
    out << "# clicktomo dataset v1\n";
    out << "# source: synthesized in-test\n";
    out << "bias_current_uA mean_photons_per_pulse clicks pulses\n";
    out << "5.0 0.1 3 16\n";
    out << "5.0 1.0 8 16\n";
    out << "6.0 0.1 4 16\n";
    out << "6.0 1.0 12 16\n";
    out.close();
    const CountRateSurface surface = load_dataset(file);
    REQUIRE(surface.settings.size() == 2);
    REQUIRE(surface.powers.size() == 2);
    CHECK(surface.rates(0, 0) == 3.0 / 16.0);
    CHECK(surface.rates(0, 1) == 8.0 / 16.0);
    CHECK(surface.rates(1, 0) == 4.0 / 16.0);
    CHECK(surface.rates(1, 1) == 12.0 / 16.0);
    CHECK(surface.pulses == 16);
}

TEST_CASE("malformed datasets fail with a located message") {
    TempDir dir;
    const fs::path missing_tag = dir.path / "untagged.tsv";
    std::ofstream(missing_tag) << "bias_current_uA mean_photons_per_pulse rate\n5 1 0.5\n";
    CHECK_THROWS_WITH_AS(load_dataset(missing_tag),
                         doctest::Contains("missing dataset tag"), std::runtime_error);

    const fs::path bad_cell = dir.path / "bad_cell.tsv";
    std::ofstream(bad_cell) << "# clicktomo dataset v1\n"
                            << "bias_current_uA mean_photons_per_pulse rate\n"
                            << "5.0 0.1 0.2\n"
                            << "5.0 1.0 oops\n";
    CHECK_THROWS_WITH_AS(load_dataset(bad_cell), doctest::Contains("line 4"),
                         std::runtime_error);

    const fs::path ragged = dir.path / "ragged.tsv";
    std::ofstream(ragged) << "# clicktomo dataset v1\n"
                          << "bias_current_uA mean_photons_per_pulse rate\n"
                          << "5.0 0.1 0.2\n"
                          << "5.0 1.0\n";
    CHECK_THROWS_WITH_AS(load_dataset(ragged), doctest::Contains("columns"),
                         std::runtime_error);

    const fs::path out_of_range = dir.path / "range.tsv";
    std::ofstream(out_of_range) << "# clicktomo dataset v1\n"
                                << "bias_current_uA mean_photons_per_pulse rate\n"
                                << "5.0 0.1 1.2\n";
    CHECK_THROWS_AS(load_dataset(out_of_range), std::runtime_error);

    CHECK_THROWS_WITH_AS(load_dataset(dir.path / "absent.tsv"),
                         doctest::Contains("cannot open"), std::runtime_error);
}

TEST_CASE("fitted povm files are lossless") {
    TempDir dir;
    const fs::path file = dir.path / "povm.json";
    const SyntheticDetector det = SyntheticDetector::default_sspd();
    const CountRateSurface surface = simulate_surface(
        det, {8.0, 10.0, 12.0, 13.0}, logspace(0.05, 4.1e4, 20), NoiseModel{});
    TomographyFit fit = fit_all(surface, 25);
    fit.fits[0].warnings.push_back("synthetic warning for the round-trip");
    save_povm(fit, file);
    const TomographyFit loaded = load_povm(file);
    REQUIRE(loaded.fits.size() == fit.fits.size());
    for (std::size_t i = 0; i < fit.fits.size(); ++i) {
        CHECK(loaded.fits[i].response.eta == fit.fits[i].response.eta);
        for (std::size_t k = 0; k < 5; ++k) {
            CHECK(loaded.fits[i].response.p[k] == fit.fits[i].response.p[k]);
        }
        CHECK(loaded.fits[i].residual == fit.fits[i].residual);
        CHECK(loaded.fits[i].degenerate == fit.fits[i].degenerate);
        CHECK(loaded.fits[i].warnings == fit.fits[i].warnings);
    }
    CHECK(bitwise_equal(loaded.povm.elements(), fit.povm.elements()));
    for (std::size_t i = 0; i < fit.povm.settings().size(); ++i) {
        CHECK(loaded.povm.settings()[i].tuning == fit.povm.settings()[i].tuning);
        CHECK(loaded.povm.settings()[i].index == fit.povm.settings()[i].index);
    }
}

TEST_CASE("reconstruction results carry their config through disk") {
    TempDir dir;
    const fs::path file = dir.path / "reconstruction.json";
    std::vector<DetectorSetting> settings;
    Eigen::MatrixXd elements(6, 13);
    for (int r = 0; r < 6; ++r) {
        NonlinearResponse resp;
        resp.eta = 0.1 + 0.15 * r;
        elements.row(r) = assemble_povm_row(resp, 12).transpose();
        settings.push_back({static_cast<double>(r), r});
    }
    const Povm povm(settings, elements);
    ReconstructionConfig cfg;
    cfg.iterations = 5000;
    cfg.n_mr = 12;
    cfg.trace_stride = 500;
    cfg.early_stop_delta = 0.0;
    const Eigen::VectorXd measured = predicted_rates(povm, coherent_distribution(1.3, 12));
    const ReconstructionResult result = reconstruct(povm, measured, cfg);
    save_result(result, file);
    const ReconstructionResult loaded = load_reconstruction(file);
    REQUIRE(loaded.rho.size() == result.rho.size());
    for (int n = 0; n < result.rho.size(); ++n) {
        CHECK(loaded.rho.probs()(n) == result.rho.probs()(n));
    }
    CHECK(loaded.loglik_trace == result.loglik_trace);
    CHECK(loaded.iterations_run == result.iterations_run);
    CHECK(bitwise_equal(loaded.predicted, result.predicted));
    CHECK(loaded.config.iterations == cfg.iterations);
    CHECK(loaded.config.n_mr == cfg.n_mr);
    CHECK(loaded.config.trace_stride == cfg.trace_stride);
    CHECK(loaded.config.early_stop_delta == cfg.early_stop_delta);
    CHECK(loaded.config.include_no_click == cfg.include_no_click);
}

TEST_CASE("error reports preserve infinities across disk") {
    TempDir dir;
    const fs::path file = dir.path / "crb.json";
    CrbReport report;
    report.sigma.resize(4);
    report.sigma << 0.1, 1.0 / 3.0, 5e-7, 0.25;
    report.relative.resize(4);
    report.relative << 0.2, std::numeric_limits<double>::infinity(), 1e-3,
        std::numeric_limits<double>::quiet_NaN();
    report.condition_flag = true;
    report.dropped = 2;
    save_result(report, file);
    const CrbReport loaded = load_crb_report(file);
    CHECK(bitwise_equal(loaded.sigma, report.sigma));
    CHECK(loaded.relative(0) == report.relative(0));
    CHECK(std::isinf(loaded.relative(1)));
    CHECK(loaded.relative(1) > 0.0);
    CHECK(loaded.relative(2) == report.relative(2));
    CHECK(std::isnan(loaded.relative(3)));
    CHECK(loaded.condition_flag == report.condition_flag);
    CHECK(loaded.dropped == report.dropped);
}

TEST_CASE("json artifacts refuse unknown versions") {
    TempDir dir;
    const fs::path file = dir.path / "future.json";
    write_text_atomic(file, R"({"format": "clicktomo-povm", "version": 2})");
    CHECK_THROWS_WITH_AS(load_povm(file), doctest::Contains("version 2"), std::runtime_error);
    const fs::path not_povm = dir.path / "other.json";
    write_text_atomic(not_povm, R"({"format": "something else", "version": 1})");
    CHECK_THROWS_AS(load_povm(not_povm), std::runtime_error);
}

TEST_CASE("atomic writes land complete and leave no temporaries") {
    TempDir dir;
    const fs::path file = dir.path / "note.txt";
    write_text_atomic(file, "first\n");
    write_text_atomic(file, "second\n");
    std::ifstream in(file);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(content == "second\n");
    int entries = 0;
    for (const auto& entry : fs::directory_iterator(dir.path)) {
        (void)entry;
        ++entries;
    }
    CHECK(entries == 1);
}
