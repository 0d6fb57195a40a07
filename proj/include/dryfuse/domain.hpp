#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace dryfuse {

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Drying-process settings for one run.
struct DryingConditions {
  double temperature = 70.0;   // degrees Celsius
  double air_velocity = 1.5;   // m/s
  double drying_time = 120.0;  // minutes

  bool operator==(const DryingConditions&) const = default;
};

// One apple slice. All moisture contents are wet-basis fractions.
struct SliceSample {
  std::string sample_id;
  std::string run_id;
  double initial_weight = 0.0;  // g
  double final_weight = 0.0;    // g
  double initial_mc = 0.85;
  std::optional<double> thickness;  // mm
  std::optional<double> diameter;   // mm
};

struct DryingRecord {
  DryingConditions conditions;
  SliceSample sample;
  std::string image_path;
  double ground_truth_mc = 0.0;
  int slices_in_run = 1;
};

// Tolerance on the dry-solids guard, in grams.
inline constexpr double kDrySolidsEpsilon = 1e-9;

// Wet-basis final moisture content from initial/final weights:
// (w_f - w_0 (1 - mc_0)) / w_f.
double compute_final_mc(const SliceSample& sample);
double compute_final_mc(double initial_weight, double initial_mc, double final_weight);

// Inverse of compute_final_mc: the final weight at which the slice reaches target_mc.
double final_weight_for_target_mc(double initial_weight, double initial_mc, double target_mc);

struct Violation {
  std::string field;
  std::string message;
};

struct ValidationResult {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  std::string summary() const;
};

// Checks every type invariant. Strict mode additionally pins the experimental
// levels: T in {60,70,80}, v in {1.5,2.5}, t in [70,250].
ValidationResult validate_record(const DryingRecord& record, bool strict = false);

}  // namespace dryfuse
