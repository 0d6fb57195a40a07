#include "dryfuse/domain.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

namespace dryfuse {

double compute_final_mc(double initial_weight, double initial_mc, double final_weight) {
  if (!(initial_weight > 0.0) || !(final_weight > 0.0)) {
    throw DomainError("weights must be positive");
  }
  if (!(initial_mc > 0.0 && initial_mc < 1.0)) {
    throw DomainError("initial moisture content must lie in (0, 1)");
  }
  const double dry_solids = initial_weight * (1.0 - initial_mc);
  if (final_weight <= dry_solids - kDrySolidsEpsilon) {
    throw DomainError("final weight below dry-solids mass (negative moisture content)");
  }
  return std::max(0.0, (final_weight - dry_solids) / final_weight);
}

double compute_final_mc(const SliceSample& sample) {
  return compute_final_mc(sample.initial_weight, sample.initial_mc, sample.final_weight);
}

double final_weight_for_target_mc(double initial_weight, double initial_mc, double target_mc) {
  if (!(initial_weight > 0.0)) throw DomainError("initial weight must be positive");
  if (!(initial_mc > 0.0 && initial_mc < 1.0)) {
    throw DomainError("initial moisture content must lie in (0, 1)");
  }
  if (!(target_mc >= 0.0 && target_mc < 1.0)) {
    throw DomainError("target moisture content must lie in [0, 1)");
  }
  return initial_weight * (1.0 - initial_mc) / (1.0 - target_mc);
}

std::string ValidationResult::summary() const {
  std::ostringstream out;
  for (std::size_t i = 0; i < violations.size(); ++i) {
    if (i) out << "; ";
    out << violations[i].field << ": " << violations[i].message;
  }
  return out.str();
}

namespace {

bool near_any(double value, std::initializer_list<double> levels) {
  return std::any_of(levels.begin(), levels.end(),
                     [&](double level) { return std::abs(value - level) < 1e-9; });
}

}  // namespace

ValidationResult validate_record(const DryingRecord& record, bool strict) {
  ValidationResult result;
  auto fail = [&](std::string field, std::string message) {
    result.violations.push_back({std::move(field), std::move(message)});
  };

  const auto& c = record.conditions;
  if (!(c.temperature >= 50.0 && c.temperature <= 90.0)) {
    fail("temperature", "temperature outside [50, 90] C");
  }
  if (!(c.air_velocity >= 1.0 && c.air_velocity <= 3.0)) {
    fail("air_velocity", "air velocity outside [1.0, 3.0] m/s");
  }
  if (!(c.drying_time > 0.0 && c.drying_time <= 400.0)) {
    fail("drying_time", "drying time outside (0, 400] min");
  }
  if (strict) {
    if (!near_any(c.temperature, {60.0, 70.0, 80.0})) {
      fail("temperature", "temperature not in {60,70,80}");
    }
    if (!near_any(c.air_velocity, {1.5, 2.5})) {
      fail("air_velocity", "air velocity not in {1.5,2.5}");
    }
    if (!(c.drying_time >= 70.0 && c.drying_time <= 250.0)) {
      fail("drying_time", "drying time not in [70, 250]");
    }
  }

  const auto& s = record.sample;
  if (s.sample_id.empty()) fail("sample_id", "empty sample id");
  if (s.run_id.empty()) fail("run_id", "empty run id");
  bool weights_ok = true;
  if (!(s.initial_weight > 0.0)) {
    fail("initial_weight", "initial weight must be positive");
    weights_ok = false;
  }
  if (!(s.final_weight > 0.0)) {
    fail("final_weight", "final weight must be positive");
    weights_ok = false;
  }
  if (!(s.initial_mc > 0.0 && s.initial_mc < 1.0)) {
    fail("initial_mc", "initial moisture content outside (0, 1)");
    weights_ok = false;
  }
  if (s.thickness && !(*s.thickness > 0.0)) fail("thickness", "thickness must be positive");
  if (s.diameter && !(*s.diameter > 0.0)) fail("diameter", "diameter must be positive");
  if (record.slices_in_run < 1) fail("slices_in_run", "slices_in_run must be >= 1");

  if (weights_ok) {
    if (s.final_weight > s.initial_weight) {
      fail("final_weight", "mass increased");
      weights_ok = false;
    }
    if (s.final_weight <= s.initial_weight * (1.0 - s.initial_mc)) {
      fail("final_weight", "final weight at or below dry-solids mass");
      weights_ok = false;
    }
  }

  if (!(record.ground_truth_mc >= 0.0 && record.ground_truth_mc < 1.0)) {
    fail("ground_truth_mc", "ground-truth moisture content outside [0, 1)");
  } else if (weights_ok) {
    const double derived = compute_final_mc(s);
    if (std::abs(derived - record.ground_truth_mc) > 1e-9) {
      fail("ground_truth_mc", "ground truth disagrees with weight-derived moisture content");
    }
  }
  return result;
}

}  // namespace dryfuse
