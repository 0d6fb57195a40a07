#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dryfuse/baselines.hpp"
#include "dryfuse/dataset.hpp"
#include "dryfuse/models.hpp"
#include "dryfuse/simulator.hpp"
#include "dryfuse/training.hpp"

namespace dryfuse {

using Json = nlohmann::ordered_json;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kConfigVersion = 1;

// Full-factorial design description; expanded into DesignCells.
struct DesignGrid {
  std::vector<double> temperatures;
  std::vector<double> velocities;
  std::vector<double> target_mcs;
  std::vector<int> run_slices;
  double min_time = 1.0;
  double max_time = 400.0;
  double time_resolution = 1.0;

  ExperimentDesign expand() const;
};

struct BaselineConfig {
  RgbMode rgb_mode = RgbMode::luminance;
  int nn_hidden = 1024;
  GpParams gp;
};

struct SweepConfig {
  std::vector<Ratio> ratios;
  int epochs = 300;
};

struct RunConfig {
  int version = kConfigVersion;
  std::uint64_t seed = 42;
  bool deterministic = true;
  int jobs = 1;

  KineticsParams kinetics;
  VariabilityParams variability;
  SliceStock stock;
  RenderSpec render;
  DesignGrid design;
  PreprocessConfig preprocess;
  FusionConfig fusion;
  TrainingConfig training;
  BaselineConfig baselines;
  SweepConfig sweep;

  SimulatorConfig simulator() const;
  void check() const;
};

// Compiled-in copy of configs/default.json.
const char* default_config_text();

Ratio parse_ratio(const std::string& text);

// Parses a complete or partial document on top of `base`. Unknown keys and
// wrong types are ConfigErrors naming the JSON path.
RunConfig apply_config(RunConfig base, const Json& document);
RunConfig default_config();
RunConfig load_config(const std::filesystem::path& path);

// Canonical document (every field, fixed key order).
Json to_json(const RunConfig& config);
// SHA-256 of the canonical document's compact dump.
std::string config_hash(const RunConfig& config);

// Applies a dotted-path override such as "training.epochs=20"; the value is
// parsed as JSON, falling back to a string.
RunConfig apply_override(const RunConfig& config, const std::string& assignment);

}  // namespace dryfuse
