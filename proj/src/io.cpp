#include "clicktomo/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "clicktomo/util.hpp"

namespace clicktomo {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr const char* kDatasetTag = "# clicktomo dataset v1";

std::vector<std::string> split_whitespace(const std::string& line) {
    std::vector<std::string> tokens;
    std::istringstream stream(line);
    std::string token;
    while (stream >> token) tokens.push_back(token);
    return tokens;
}

double parse_double(const std::string& token, const fs::path& path, std::size_t line_number) {
    double value = 0.0;
    const char* begin = token.data();
    const char* end = begin + token.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end) {
        throw std::runtime_error(path.string() + ": line " + std::to_string(line_number) +
                                 ": cannot parse '" + token + "' as a number");
    }
    return value;
}

std::int64_t parse_int(const std::string& token, const fs::path& path, std::size_t line_number) {
    std::int64_t value = 0;
    const char* begin = token.data();
    const char* end = begin + token.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end) {
        throw std::runtime_error(path.string() + ": line " + std::to_string(line_number) +
                                 ": cannot parse '" + token + "' as an integer");
    }
    return value;
}

json vector_to_json(const Eigen::VectorXd& v) {
    json array = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) array.push_back(v[i]);
    return array;
}

Eigen::VectorXd json_to_vector(const json& array) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(array.size()));
    Eigen::Index i = 0;
    for (const auto& entry : array) v[i++] = entry.get<double>();
    return v;
}

/// Non-finite doubles have no JSON number representation; they are encoded
/// as the strings "inf", "-inf", "nan" so roundtrips stay lossless.
json encode_extended(double value) {
    if (std::isfinite(value)) return json(value);
    if (std::isnan(value)) return json("nan");
    return json(value > 0 ? "inf" : "-inf");
}

double decode_extended(const json& entry) {
    if (entry.is_number()) return entry.get<double>();
    const std::string s = entry.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    throw std::runtime_error("unrecognized extended number '" + s + "'");
}

json load_json(const fs::path& path, const std::string& expected_format) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(path.string() + ": cannot open");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
    if (!j.is_object() || j.value("format", std::string()) != expected_format) {
        throw std::runtime_error(path.string() + ": not a " + expected_format + " file");
    }
    const int version = j.value("version", -1);
    if (version != 1) {
        throw std::runtime_error(path.string() + ": unsupported " + expected_format +
                                 " version " + std::to_string(version) + " (this build reads 1)");
    }
    return j;
}

}  // namespace

DatasetFile load_dataset_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(path.string() + ": cannot open");

    DatasetFile file;
    std::string line;
    std::size_t line_number = 0;

    auto next_line = [&]() -> bool {
        if (!std::getline(in, line)) return false;
        ++line_number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return true;
    };

    if (!next_line() || line != kDatasetTag) {
        throw std::runtime_error(path.string() + ": missing dataset tag '" +
                                 std::string(kDatasetTag) + "' on line 1");
    }

    // Metadata lines, then the header row.
    std::vector<std::string> header;
    while (next_line()) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            const std::size_t colon = line.find(':');
            if (colon != std::string::npos && colon > 1) {
                std::string key = line.substr(1, colon - 1);
                std::string value = line.substr(colon + 1);
                const auto trim = [](std::string& s) {
                    const auto first = s.find_first_not_of(" \t");
                    const auto last = s.find_last_not_of(" \t");
                    s = first == std::string::npos ? std::string() : s.substr(first, last - first + 1);
                };
                trim(key);
                trim(value);
                if (!key.empty()) file.metadata[key] = value;
            }
            continue;
        }
        header = split_whitespace(line);
        break;
    }
    if (header.empty()) {
        throw std::runtime_error(path.string() + ": no header row found");
    }

    auto column = [&](const std::string& name) -> std::ptrdiff_t {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return static_cast<std::ptrdiff_t>(i);
        }
        return -1;
    };
    const std::ptrdiff_t col_current = column("bias_current_uA");
    const std::ptrdiff_t col_power = column("mean_photons_per_pulse");
    const std::ptrdiff_t col_rate = column("rate");
    const std::ptrdiff_t col_clicks = column("clicks");
    const std::ptrdiff_t col_pulses = column("pulses");
    if (col_current < 0 || col_power < 0) {
        throw std::runtime_error(path.string() +
                                 ": header must name bias_current_uA and mean_photons_per_pulse");
    }
    if (col_rate < 0 && (col_clicks < 0 || col_pulses < 0)) {
        throw std::runtime_error(path.string() +
                                 ": header must name either rate or clicks together with pulses");
    }

    struct Row {
        double current;
        double power;
        double rate;
    };
    std::vector<Row> rows;
    std::int64_t pulses = 0;
    bool pulses_seen = false;
    while (next_line()) {
        if (line.empty() || line[0] == '#') continue;
        const std::vector<std::string> tokens = split_whitespace(line);
        if (tokens.size() != header.size()) {
            throw std::runtime_error(path.string() + ": line " + std::to_string(line_number) +
                                     ": expected " + std::to_string(header.size()) +
                                     " columns, got " + std::to_string(tokens.size()));
        }
        Row row{};
        row.current = parse_double(tokens[static_cast<std::size_t>(col_current)], path, line_number);
        row.power = parse_double(tokens[static_cast<std::size_t>(col_power)], path, line_number);
        std::int64_t row_pulses = 0;
        if (col_pulses >= 0) {
            row_pulses = parse_int(tokens[static_cast<std::size_t>(col_pulses)], path, line_number);
            if (pulses_seen && row_pulses != pulses) {
                throw std::runtime_error(path.string() + ": line " + std::to_string(line_number) +
                                         ": pulse count changed mid-file (" +
                                         std::to_string(row_pulses) + " after " +
                                         std::to_string(pulses) + ")");
            }
            pulses = row_pulses;
            pulses_seen = true;
        }
        if (col_rate >= 0) {
            row.rate = parse_double(tokens[static_cast<std::size_t>(col_rate)], path, line_number);
        } else {
            const std::int64_t clicks =
                parse_int(tokens[static_cast<std::size_t>(col_clicks)], path, line_number);
            if (row_pulses < 1) {
                throw std::runtime_error(path.string() + ": line " + std::to_string(line_number) +
                                         ": clicks given but pulses is not >= 1");
            }
            row.rate = static_cast<double>(clicks) / static_cast<double>(row_pulses);
        }
        rows.push_back(row);
    }
    if (rows.empty()) throw std::runtime_error(path.string() + ": no data rows");

    // Group rows by bias current in order of first appearance; every setting
    // must carry the same power sequence.
    std::vector<double> currents;
    std::vector<double> powers;
    for (const Row& row : rows) {
        if (currents.empty() || row.current != currents.back()) currents.push_back(row.current);
    }
    const std::size_t n_powers = rows.size() / currents.size();
    if (currents.size() * n_powers != rows.size()) {
        throw std::runtime_error(path.string() + ": rows do not form a full settings x powers "
                                 "grid (" + std::to_string(rows.size()) + " rows over " +
                                 std::to_string(currents.size()) + " settings)");
    }
    CountRateSurface surface;
    surface.pulses = pulses;
    surface.rates.resize(static_cast<Eigen::Index>(currents.size()),
                         static_cast<Eigen::Index>(n_powers));
    for (std::size_t i = 0; i < currents.size(); ++i) {
        surface.settings.push_back(DetectorSetting{currents[i], static_cast<int>(i)});
        for (std::size_t j = 0; j < n_powers; ++j) {
            const Row& row = rows[i * n_powers + j];
            if (row.current != currents[i]) {
                throw std::runtime_error(path.string() + ": settings are interleaved; rows for "
                                         "one bias current must be contiguous");
            }
            if (i == 0) {
                powers.push_back(row.power);
            } else if (row.power != powers[j]) {
                throw std::runtime_error(path.string() + ": power grid differs between settings "
                                         "(setting " + std::to_string(i) + ", power index " +
                                         std::to_string(j) + ")");
            }
            surface.rates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row.rate;
        }
    }
    surface.powers = std::move(powers);
    try {
        surface.validate();
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
    file.surface = std::move(surface);
    return file;
}

CountRateSurface load_dataset(const fs::path& path) { return load_dataset_file(path).surface; }

void save_dataset(const CountRateSurface& surface, const fs::path& path,
                  const std::map<std::string, std::string>& metadata) {
    surface.validate();
    std::string out;
    out += kDatasetTag;
    out += '\n';
    for (const auto& [key, value] : metadata) {
        out += "# " + key + ": " + value + "\n";
    }
    out += "bias_current_uA\tmean_photons_per_pulse\trate\tpulses\n";
    for (std::size_t i = 0; i < surface.settings.size(); ++i) {
        for (std::size_t j = 0; j < surface.powers.size(); ++j) {
            out += format_double(surface.settings[i].tuning);
            out += '\t';
            out += format_double(surface.powers[j]);
            out += '\t';
            out += format_double(
                surface.rates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
            out += '\t';
            out += std::to_string(surface.pulses);
            out += '\n';
        }
    }
    write_text_atomic(path, out);
}

void save_povm(const TomographyFit& fit, const fs::path& path) {
    if (fit.fits.size() != fit.povm.settings().size()) {
        throw std::invalid_argument("fit records do not match the POVM settings");
    }
    json j;
    j["format"] = "clicktomo-povm";
    j["version"] = 1;
    j["n_mr"] = fit.povm.n_mr();
    json settings = json::array();
    for (std::size_t i = 0; i < fit.fits.size(); ++i) {
        const SettingFit& f = fit.fits[i];
        json record;
        record["tuning"] = fit.povm.settings()[i].tuning;
        record["index"] = fit.povm.settings()[i].index;
        record["eta"] = f.response.eta;
        record["p"] = f.response.p;
        record["residual"] = f.residual;
        record["degenerate"] = f.degenerate;
        record["warnings"] = f.warnings;
        settings.push_back(std::move(record));
    }
    j["settings"] = std::move(settings);
    json elements = json::array();
    for (Eigen::Index r = 0; r < fit.povm.elements().rows(); ++r) {
        elements.push_back(vector_to_json(fit.povm.elements().row(r).transpose()));
    }
    j["elements"] = std::move(elements);
    write_text_atomic(path, j.dump(2) + "\n");
}

TomographyFit load_povm(const fs::path& path) {
    const json j = load_json(path, "clicktomo-povm");
    try {
        const int n_mr = j.at("n_mr").get<int>();
        std::vector<DetectorSetting> settings;
        std::vector<SettingFit> fits;
        for (const auto& record : j.at("settings")) {
            DetectorSetting setting;
            setting.tuning = record.at("tuning").get<double>();
            setting.index = record.at("index").get<int>();
            settings.push_back(setting);
            SettingFit f;
            f.response.eta = record.at("eta").get<double>();
            f.response.p = record.at("p").get<std::array<double, 5>>();
            f.residual = record.at("residual").get<double>();
            f.degenerate = record.at("degenerate").get<bool>();
            f.warnings = record.at("warnings").get<std::vector<std::string>>();
            fits.push_back(std::move(f));
        }
        const auto& rows = j.at("elements");
        Eigen::MatrixXd elements(static_cast<Eigen::Index>(rows.size()), n_mr + 1);
        Eigen::Index r = 0;
        for (const auto& row : rows) {
            if (static_cast<int>(row.size()) != n_mr + 1) {
                throw std::runtime_error("element row " + std::to_string(r) + " has " +
                                         std::to_string(row.size()) + " entries, expected " +
                                         std::to_string(n_mr + 1));
            }
            elements.row(r++) = json_to_vector(row).transpose();
        }
        if (fits.size() != settings.size() ||
            static_cast<Eigen::Index>(settings.size()) != elements.rows()) {
            throw std::runtime_error("settings and elements disagree in count");
        }
        return TomographyFit{std::move(fits), Povm(std::move(settings), std::move(elements))};
    } catch (const json::exception& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

void save_result(const ReconstructionResult& result, const fs::path& path) {
    json j;
    j["format"] = "clicktomo-reconstruction";
    j["version"] = 1;
    j["config"] = {
        {"iterations", result.config.iterations},
        {"early_stop_delta", result.config.early_stop_delta},
        {"n_mr", result.config.n_mr},
        {"include_no_click", result.config.include_no_click},
        {"trace_stride", result.config.trace_stride},
    };
    j["iterations_run"] = result.iterations_run;
    j["rho"] = vector_to_json(result.rho.probs());
    j["predicted"] = vector_to_json(result.predicted);
    j["loglik_trace"] = result.loglik_trace;
    write_text_atomic(path, j.dump(2) + "\n");
}

ReconstructionResult load_reconstruction(const fs::path& path) {
    const json j = load_json(path, "clicktomo-reconstruction");
    try {
        ReconstructionResult result;
        const json& cfg = j.at("config");
        result.config.iterations = cfg.at("iterations").get<std::int64_t>();
        result.config.early_stop_delta = cfg.at("early_stop_delta").get<double>();
        result.config.n_mr = cfg.at("n_mr").get<int>();
        result.config.include_no_click = cfg.at("include_no_click").get<bool>();
        result.config.trace_stride = cfg.at("trace_stride").get<std::int64_t>();
        result.iterations_run = j.at("iterations_run").get<std::int64_t>();
        result.rho = FockDistribution::from_probabilities(json_to_vector(j.at("rho")));
        result.predicted = json_to_vector(j.at("predicted"));
        result.loglik_trace = j.at("loglik_trace").get<std::vector<double>>();
        return result;
    } catch (const json::exception& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

void save_result(const CrbReport& report, const fs::path& path) {
    json j;
    j["format"] = "clicktomo-crb";
    j["version"] = 1;
    j["sigma"] = vector_to_json(report.sigma);
    json relative = json::array();
    for (Eigen::Index i = 0; i < report.relative.size(); ++i) {
        relative.push_back(encode_extended(report.relative[i]));
    }
    j["relative"] = std::move(relative);
    j["condition_flag"] = report.condition_flag;
    j["dropped"] = report.dropped;
    write_text_atomic(path, j.dump(2) + "\n");
}

void write_text_atomic(const fs::path& path, const std::string& content) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error(tmp.string() + ": cannot open for writing");
        out << content;
        out.flush();
        if (!out) throw std::runtime_error(tmp.string() + ": write failed");
    }
    fs::rename(tmp, path);
}

CrbReport load_crb_report(const fs::path& path) {
    const json j = load_json(path, "clicktomo-crb");
    try {
        CrbReport report;
        report.sigma = json_to_vector(j.at("sigma"));
        const auto& relative = j.at("relative");
        report.relative.resize(static_cast<Eigen::Index>(relative.size()));
        Eigen::Index i = 0;
        for (const auto& entry : relative) report.relative[i++] = decode_extended(entry);
        report.condition_flag = j.at("condition_flag").get<bool>();
        report.dropped = j.at("dropped").get<int>();
        return report;
    } catch (const json::exception& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

}  // namespace clicktomo
