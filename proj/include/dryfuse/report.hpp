#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dryfuse/config.hpp"
#include "dryfuse/experiments.hpp"

namespace dryfuse {

const char* tool_version();

// Stamped into every artifact.
struct Provenance {
  std::string tool_version;
  std::string config_hash;
  std::string dataset_hash;
  std::uint64_t seed = 0;
  bool deterministic = true;
  std::optional<double> wall_clock_seconds;  // omitted in deterministic mode

  Json to_json() const;
  static Provenance from_json(const Json& j);
};

struct FoldInfo {
  std::string label;
  double temperature = 0.0;
  double air_velocity = 0.0;
  std::vector<std::string> eval_samples;
};

struct ExperimentReport {
  std::string kind;  // "ablation", "sweep" or "evaluate"
  Provenance provenance;
  std::vector<FoldInfo> folds;
  std::vector<ArmResult> arms;
  std::vector<Ratio> sweep_ratios;
  // Records needed by the paired-slice analysis (run ids and slice counts).
  std::vector<DryingRecord> records;
};

std::vector<FoldInfo> fold_info(const std::vector<FoldSplit>& folds, const std::vector<DryingRecord>& records);

bool has_arm(const ExperimentReport& report, const std::string& name);

// Serialization. Derived tables are written for convenience but recomputed
// from the per-record predictions on load.
Json report_to_json(const ExperimentReport& report);
ExperimentReport report_from_json(const Json& j);

void write_report(const std::filesystem::path& dir, const ExperimentReport& report);
ExperimentReport read_report(const std::filesystem::path& json_path);

// CSV renderings of the derived tables.
std::string table_csv(const std::vector<TableRow>& rows);
std::string sweep_csv(const std::vector<SweepRow>& rows);

// Fixed-width text renderings for the terminal.
std::string format_ablation_table(const std::vector<TableRow>& rows);
std::string format_baseline_table(const std::vector<TableRow>& rows);
std::string format_sweep_table(const std::vector<SweepRow>& rows);
std::string format_paired_report(const PairedSliceReport& report);
std::string format_error_density(const ErrorDensity& density);

}  // namespace dryfuse
