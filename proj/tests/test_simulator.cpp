#include <doctest.h>

#include <cmath>
#include <numbers>
#include <map>
#include <set>

#include <Eigen/QR>

#include "dryfuse/config.hpp"
#include "dryfuse/simulator.hpp"

using namespace dryfuse;

namespace {

SliceSample nominal_slice(double thickness = 5.0) {
  SliceSample s;
  s.sample_id = "x";
  s.run_id = "r";
  s.initial_weight = 12.0;
  s.initial_mc = 0.85;
  s.thickness = thickness;
  s.diameter = 70.0;
  return s;
}

}  // namespace

TEST_SUITE("simulator") {

TEST_CASE("rate constant follows the Arrhenius-power form") {
  const auto k = default_config().kinetics;
  const DryingConditions c{70.0, 2.5, 100.0};
  const double expected = k.pre_exponential * std::exp(-k.activation_temperature / 343.15) *
                          std::pow(2.5, k.velocity_exponent) / std::pow(4.0, k.thickness_exponent);
  CHECK(drying_rate_constant(c, 4.0, k) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("moisture decreases with time, temperature and air speed") {
  const auto k = default_config().kinetics;
  const auto s = nominal_slice();
  auto mc = [&](double T, double v, double t) { return noiseless_final_mc({T, v, t}, s, k); };
  for (double t = 10.0; t < 300.0; t += 10.0) CHECK(mc(70, 1.5, t + 10.0) < mc(70, 1.5, t));
  CHECK(mc(80, 1.5, 120) < mc(70, 1.5, 120));
  CHECK(mc(70, 1.5, 120) < mc(60, 1.5, 120));
  CHECK(mc(70, 2.5, 120) < mc(70, 1.5, 120));
  // Thicker slices dry slower.
  CHECK(noiseless_final_mc({70, 1.5, 120}, nominal_slice(6.0), k) >
        noiseless_final_mc({70, 1.5, 120}, nominal_slice(4.0), k));
  // Long drying approaches equilibrium from above.
  CHECK(mc(80, 2.5, 5000) > k.equilibrium_mc);
  CHECK(mc(80, 2.5, 5000) == doctest::Approx(k.equilibrium_mc).epsilon(1e-6));
  CHECK_THROWS_AS(mc(70, 1.5, 0.0), DomainError);
}

TEST_CASE("zero rate noise reproduces the noiseless core") {
  auto k = default_config().kinetics;
  k.rate_noise_sd = 0.0;
  Rng rng(1);
  const DryingConditions c{60.0, 1.5, 150.0};
  CHECK(simulate_final_mc(c, nominal_slice(), k, rng) == noiseless_final_mc(c, nominal_slice(), k));
}

TEST_CASE("drying time solver hits the target mean") {
  const auto k = default_config().kinetics;
  const std::vector<SliceSample> run{nominal_slice(4.5), nominal_slice(5.5)};
  for (double target : {0.1, 0.2, 0.4}) {
    const double t = solve_drying_time(70.0, 1.5, run, target, k, 1.0, 400.0);
    const double mean = 0.5 * (noiseless_final_mc({70, 1.5, t}, run[0], k) +
                               noiseless_final_mc({70, 1.5, t}, run[1], k));
    CHECK(mean == doctest::Approx(target).epsilon(1e-8));
  }
  CHECK_THROWS_AS(solve_drying_time(70.0, 1.5, run, 0.01, k, 1.0, 400.0), DomainError);
}

TEST_CASE("default design yields the benchmark dataset") {
  const RunConfig cfg = default_config();
  const auto sim = generate_dataset(cfg.simulator(), 42);
  CHECK(sim.records.size() == 84);
  CHECK(sim.images.size() == 84);
  std::set<std::pair<double, double>> cells;
  std::set<std::string> runs, ids;
  for (const auto& r : sim.records) {
    cells.emplace(r.conditions.temperature, r.conditions.air_velocity);
    runs.insert(r.sample.run_id);
    ids.insert(r.sample.sample_id);
    const auto v = validate_record(r, true);
    CHECK_MESSAGE(v.ok(), r.sample.sample_id << ": " << v.summary());
  }
  CHECK(cells.size() == 6);
  CHECK(runs.size() == 48);
  CHECK(ids.size() == 84);
}

TEST_CASE("generation is deterministic per seed and prefix-stable") {
  const auto cfg = default_config().simulator();
  const auto a = generate_dataset(cfg, 7, 5);
  const auto b = generate_dataset(cfg, 7, 5);
  const auto c = generate_dataset(cfg, 8, 5);
  const auto longer = generate_dataset(cfg, 7, 9);
  REQUIRE(a.records.size() == b.records.size());
  bool differs = false;
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].sample.final_weight == b.records[i].sample.final_weight);
    CHECK(a.images[i].image.rgb == b.images[i].image.rgb);
    CHECK(a.records[i].sample.final_weight == longer.records[i].sample.final_weight);
    differs = differs || a.records[i].sample.final_weight != c.records[i].sample.final_weight;
  }
  CHECK(differs);
}

TEST_CASE("slice override and run limit") {
  const auto cfg = default_config().simulator();
  const auto one = generate_dataset(cfg, 1, 1, 1);
  REQUIRE(one.records.size() == 1);
  CHECK(one.records[0].slices_in_run == 1);
  const auto three = generate_dataset(cfg, 1, 2, 3);
  CHECK(three.records.size() == 6);
}

TEST_CASE("rendered annulus matches its geometry") {
  const auto cfg = default_config();
  auto spec = cfg.render;
  spec.boundary_perturbation = 0.0;
  auto var = cfg.variability;
  var.pixel_noise_sd = 0.0;
  Rng rng(5);
  SliceSample s = nominal_slice();
  s.final_weight = final_weight_for_target_mc(s.initial_weight, s.initial_mc, 0.2);
  const auto img = render_slice_image(s, 0.2, {70, 1.5, 120}, spec, var, rng);
  REQUIRE(img.slices.size() == 1);
  const auto& g = img.slices[0].geometry;
  const double area = std::numbers::pi * (g.outer_radius * g.outer_radius - g.hole_radius * g.hole_radius);
  CHECK(static_cast<double>(img.slices[0].truth_mask.count()) == doctest::Approx(area).epsilon(0.01));
  // The coring hole shows the background.
  const int cx = static_cast<int>(g.center_x), cy = static_cast<int>(g.center_y);
  CHECK(img.slices[0].truth_mask.at(cx, cy) == 0);
  CHECK(img.image.rgb.get(cx, cy) == img.image.rgb.get(0, 0));
  // Shrinkage: a drier slice renders smaller.
  SliceSample drier = s;
  drier.final_weight = final_weight_for_target_mc(s.initial_weight, s.initial_mc, 0.05);
  Rng rng2(5);
  const auto img2 = render_slice_image(drier, 0.05, {70, 1.5, 120}, spec, var, rng2);
  CHECK(img2.slices[0].geometry.outer_radius < g.outer_radius);
}

TEST_CASE("browning grows with temperature, time and water removed") {
  const auto spec = default_config().render;
  const double base = browning_index({60, 1.5, 100}, 0.85, 0.2, spec);
  CHECK(browning_index({80, 1.5, 100}, 0.85, 0.2, spec) > base);
  CHECK(browning_index({60, 1.5, 200}, 0.85, 0.2, spec) > base);
  CHECK(browning_index({60, 1.5, 100}, 0.85, 0.1, spec) > base);
  CHECK(browning_index({80, 1.5, 250}, 0.85, 0.0, spec) <= 1.0);
  CHECK(browning_index({50, 1.5, 1}, 0.85, 0.84, spec) >= 0.0);
}

TEST_CASE("images explain slice differences within a run") {
  // Differences between slices dried together, regressed on the differences in
  // their rendered mean colour and area.
  const auto sim = generate_dataset(default_config().simulator(), 42);
  std::map<std::string, std::vector<std::size_t>> runs;
  for (std::size_t i = 0; i < sim.records.size(); ++i) runs[sim.records[i].sample.run_id].push_back(i);
  auto features = [&](std::size_t i) {
    const auto& img = sim.images[i];
    const auto& mask = img.slices.at(0).truth_mask;
    Eigen::Vector4d f = Eigen::Vector4d::Zero();
    for (int y = 0; y < mask.height; ++y)
      for (int x = 0; x < mask.width; ++x)
        if (mask.at(x, y))
          for (int c = 0; c < 3; ++c) f(c) += img.image.rgb.at(x, y, c);
    const double n = static_cast<double>(mask.count());
    f.head<3>() /= n;
    f(3) = n;
    return f;
  };
  std::vector<Eigen::Vector4d> dx;
  std::vector<double> dy;
  for (const auto& [id, rows] : runs) {
    if (rows.size() != 2) continue;
    dx.push_back(features(rows[0]) - features(rows[1]));
    dy.push_back(sim.records[rows[0]].ground_truth_mc - sim.records[rows[1]].ground_truth_mc);
  }
  REQUIRE(dx.size() == 36);
  Eigen::MatrixXd x(36, 4);
  Eigen::VectorXd y(36);
  for (int i = 0; i < 36; ++i) x.row(i) = dx[i].transpose(), y(i) = dy[i];
  const Eigen::VectorXd beta = x.colPivHouseholderQr().solve(y);
  const double r2 = 1.0 - (y - x * beta).squaredNorm() / y.squaredNorm();
  MESSAGE("within-run R^2 " << r2);
  CHECK(r2 > 0.5);
}

}  // TEST_SUITE
