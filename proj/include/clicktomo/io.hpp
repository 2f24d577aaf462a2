#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "clicktomo/fisher.hpp"
#include "clicktomo/reconstruction.hpp"
#include "clicktomo/tomography.hpp"

namespace clicktomo {

/// Count-rate dataset on disk: delimited text opening with a
/// `# clicktomo dataset v1` tag, optional `# key: value` metadata lines, a
/// header row, and one row per (setting, power) cell. Rates may be given
/// directly or as clicks/pulses pairs. See docs/formats.md.
struct DatasetFile {
    int version = 1;
    std::map<std::string, std::string> metadata;
    CountRateSurface surface;
};

/// Parses and validates a dataset. Malformed rows fail with their line
/// number; out-of-range values fail naming the offending cell. Loading never
/// yields a surface that violates its invariants.
DatasetFile load_dataset_file(const std::filesystem::path& path);
CountRateSurface load_dataset(const std::filesystem::path& path);

void save_dataset(const CountRateSurface& surface, const std::filesystem::path& path,
                  const std::map<std::string, std::string>& metadata = {});

/// Fitted-POVM files: versioned JSON with per-setting records and the
/// assembled element matrix. Save-then-load is lossless to the last bit.
void save_povm(const TomographyFit& fit, const std::filesystem::path& path);
TomographyFit load_povm(const std::filesystem::path& path);

/// Result files carry the reconstruction config for reproducibility.
void save_result(const ReconstructionResult& result, const std::filesystem::path& path);
ReconstructionResult load_reconstruction(const std::filesystem::path& path);

void save_result(const CrbReport& report, const std::filesystem::path& path);
CrbReport load_crb_report(const std::filesystem::path& path);

/// Whole-file atomic write (temp file + rename). Used by every emitter so a
/// crash never leaves a half-written artifact behind.
void write_text_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace clicktomo
