#include <doctest.h>

#include <random>

#include "dryfuse/domain.hpp"

using namespace dryfuse;

namespace {

DryingRecord good_record() {
  DryingRecord r;
  r.conditions = {70.0, 1.5, 120.0};
  r.sample.sample_id = "s1";
  r.sample.run_id = "r1";
  r.sample.initial_weight = 10.0;
  r.sample.final_weight = 2.0;
  r.sample.initial_mc = 0.85;
  r.ground_truth_mc = compute_final_mc(r.sample);
  return r;
}

bool has_field(const ValidationResult& v, const std::string& field) {
  for (const auto& x : v.violations) {
    if (x.field == field) return true;
  }
  return false;
}

}  // namespace

TEST_SUITE("domain") {

TEST_CASE("wet-basis moisture from weights") {
  // 10 g at 85% water holds 1.5 g of solids; 2 g left means 0.5 g of water.
  CHECK(compute_final_mc(10.0, 0.85, 2.0) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(compute_final_mc(10.0, 0.85, 10.0) == doctest::Approx(0.85).epsilon(1e-15));
  CHECK(final_weight_for_target_mc(10.0, 0.85, 0.25) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(final_weight_for_target_mc(10.0, 0.85, 0.0) == doctest::Approx(1.5).epsilon(1e-15));
}

TEST_CASE("weights at or below the dry solids are rejected") {
  CHECK_THROWS_AS(compute_final_mc(10.0, 0.85, 1.4), DomainError);
  CHECK_THROWS_AS(compute_final_mc(-1.0, 0.85, 1.0), DomainError);
  CHECK_THROWS_AS(compute_final_mc(10.0, 1.0, 5.0), DomainError);
  CHECK_THROWS_AS(final_weight_for_target_mc(10.0, 0.85, 1.0), DomainError);
}

TEST_CASE("round trip through the inverse") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> w(1.0, 30.0), mc0(0.6, 0.95), frac(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 2000; ++i) {
    const double w0 = w(rng), m0 = mc0(rng), t = m0 * frac(rng);  // drying only
    const double wf = final_weight_for_target_mc(w0, m0, t);
    CHECK(wf <= w0 * (1.0 + 1e-15));
    worst = std::max(worst, std::abs(compute_final_mc(w0, m0, wf) - t));
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("moisture falls as the slice loses weight") {
  double prev = 1.0;
  for (double wf = 9.5; wf > 1.6; wf -= 0.5) {
    const double mc = compute_final_mc(10.0, 0.85, wf);
    CHECK(mc < prev);
    prev = mc;
  }
}

TEST_CASE("valid record passes both modes") {
  const auto r = good_record();
  CHECK(validate_record(r).ok());
  CHECK(validate_record(r, true).ok());
}

TEST_CASE("validation reports each broken invariant") {
  auto r = good_record();
  r.sample.final_weight = 11.0;
  r.ground_truth_mc = 0.5;
  CHECK(has_field(validate_record(r), "final_weight"));

  r = good_record();
  r.ground_truth_mc += 1e-6;
  CHECK(has_field(validate_record(r), "ground_truth_mc"));

  r = good_record();
  r.conditions.temperature = 95.0;
  CHECK(has_field(validate_record(r), "temperature"));

  r = good_record();
  r.sample.sample_id.clear();
  r.slices_in_run = 0;
  const auto v = validate_record(r);
  CHECK(has_field(v, "sample_id"));
  CHECK(has_field(v, "slices_in_run"));
  CHECK(v.summary().find("sample_id") != std::string::npos);
}

TEST_CASE("strict mode pins the experimental grid") {
  auto r = good_record();
  r.conditions.temperature = 65.0;
  CHECK(validate_record(r).ok());
  CHECK(has_field(validate_record(r, true), "temperature"));

  r = good_record();
  r.conditions.air_velocity = 2.0;
  CHECK(has_field(validate_record(r, true), "air_velocity"));

  r = good_record();
  r.conditions.drying_time = 30.0;
  CHECK(validate_record(r).ok());
  CHECK(has_field(validate_record(r, true), "drying_time"));
}

}  // TEST_SUITE
