#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "dryfuse/domain.hpp"

namespace dryfuse {

// Column order of manifest.csv.
inline const std::vector<std::string> kManifestColumns = {
    "sample_id",      "run_id",          "temperature_C", "air_velocity_mps", "drying_time_min",
    "initial_weight_g", "final_weight_g", "initial_mc",    "slices_in_run",    "image_path"};

class ManifestParseError : public std::runtime_error {
 public:
  ManifestParseError(const std::string& message, std::size_t line, std::size_t column);
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

// Shortest decimal text that parses back to the same double.
std::string format_number(double value);

std::string manifest_text(const std::vector<DryingRecord>& records);
void write_manifest(const std::filesystem::path& path, const std::vector<DryingRecord>& records);

// Parses manifest text. Ground truth is derived from the weights when they are
// consistent, otherwise left NaN for validation to report.
std::vector<DryingRecord> parse_manifest(const std::string& text);
std::vector<DryingRecord> read_manifest(const std::filesystem::path& path);

struct RowViolation {
  std::size_t row = 0;  // 1-based data row (header excluded)
  std::string message;
};

struct IngestResult {
  std::filesystem::path root;  // directory holding the manifest
  std::vector<DryingRecord> records;
  std::vector<RowViolation> violations;
  std::string dataset_hash;

  bool ok() const { return violations.empty(); }
  std::size_t condition_count() const;
  std::string summary() const;
};

// Loads a manifest, validates every row, checks run consistency and that each
// image exists and decodes.
IngestResult ingest_manifest(const std::filesystem::path& manifest_path, bool strict = false);

// SHA-256 over the manifest bytes followed by every referenced image file.
std::string dataset_hash(const std::filesystem::path& manifest_path);

}  // namespace dryfuse
