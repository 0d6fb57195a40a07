#include "dryfuse/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "dryfuse/imaging.hpp"
#include "dryfuse/manifest.hpp"

namespace dryfuse {

void KineticsParams::check() const {
  if (!(pre_exponential > 0.0)) throw DomainError("kinetics: pre_exponential must be > 0");
  if (!(page_exponent > 0.5 && page_exponent <= 2.0)) {
    throw DomainError("kinetics: page_exponent must lie in (0.5, 2]");
  }
  if (!(velocity_exponent >= 0.0)) throw DomainError("kinetics: velocity_exponent must be >= 0");
  if (!(thickness_exponent >= 0.0)) throw DomainError("kinetics: thickness_exponent must be >= 0");
  if (!(equilibrium_mc >= 0.0 && equilibrium_mc < 0.1)) {
    throw DomainError("kinetics: equilibrium_mc must lie in [0, 0.1)");
  }
  if (!(reference_thickness > 0.0)) throw DomainError("kinetics: reference_thickness must be > 0");
  if (!(rate_noise_sd >= 0.0)) throw DomainError("kinetics: rate_noise_sd must be >= 0");
}

void VariabilityParams::check() const {
  for (double v : {thickness_cv, weight_cv, diameter_cv, initial_mc_sd, pixel_noise_sd,
                   browning_noise_sd}) {
    if (!(v >= 0.0)) throw DomainError("variability parameters must be >= 0");
  }
}

void RenderSpec::check() const {
  if (canvas_width < 256 || canvas_height < 256) throw DomainError("render: canvas must be >= 256x256");
  if (!(core_hole_fraction >= 0.0 && core_hole_fraction < 1.0)) {
    throw DomainError("render: core_hole_fraction must lie in [0, 1)");
  }
  if (!(pixels_per_mm > 0.0)) throw DomainError("render: pixels_per_mm must be > 0");
  if (!(shrinkage_exponent >= 0.0)) throw DomainError("render: shrinkage_exponent must be >= 0");
  if (!(boundary_perturbation >= 0.0 && boundary_perturbation < 0.2)) {
    throw DomainError("render: boundary_perturbation must lie in [0, 0.2)");
  }
}

std::size_t ExperimentDesign::run_count() const {
  std::size_t n = 0;
  for (const auto& c : cells) n += c.run_slices.size();
  return n;
}

std::size_t ExperimentDesign::slice_count() const {
  std::size_t n = 0;
  for (const auto& c : cells) {
    for (int s : c.run_slices) n += static_cast<std::size_t>(s);
  }
  return n;
}

// ---------------------------------------------------------------------------

double drying_rate_constant(const DryingConditions& conditions, double thickness,
                            const KineticsParams& kinetics) {
  const double kelvin = conditions.temperature + 273.15;
  return kinetics.pre_exponential * std::exp(-kinetics.activation_temperature / kelvin) *
         std::pow(conditions.air_velocity, kinetics.velocity_exponent) *
         std::pow(thickness, -kinetics.thickness_exponent);
}

namespace {

double mc_after(double rate, double time, const SliceSample& sample, const KineticsParams& kinetics) {
  const double mr = std::exp(-rate * std::pow(time, kinetics.page_exponent));
  const double x0 = sample.initial_mc / (1.0 - sample.initial_mc);
  const double xe = kinetics.equilibrium_mc / (1.0 - kinetics.equilibrium_mc);
  const double x = xe + (x0 - xe) * mr;
  return x / (1.0 + x);
}

double thickness_of(const SliceSample& sample, const KineticsParams& kinetics) {
  return sample.thickness.value_or(kinetics.reference_thickness);
}

}  // namespace

double noiseless_final_mc(const DryingConditions& conditions, const SliceSample& sample,
                          const KineticsParams& kinetics) {
  if (!(conditions.drying_time > 0.0)) throw DomainError("drying time must be positive");
  const double rate = drying_rate_constant(conditions, thickness_of(sample, kinetics), kinetics);
  return mc_after(rate, conditions.drying_time, sample, kinetics);
}

double simulate_final_mc(const DryingConditions& conditions, const SliceSample& sample,
                         const KineticsParams& kinetics, Rng& rng) {
  if (!(conditions.drying_time > 0.0)) throw DomainError("drying time must be positive");
  std::normal_distribution<double> normal;
  const double noise = std::exp(kinetics.rate_noise_sd * normal(rng));
  const double rate =
      drying_rate_constant(conditions, thickness_of(sample, kinetics), kinetics) * noise;
  return mc_after(rate, conditions.drying_time, sample, kinetics);
}

double solve_drying_time(double temperature, double air_velocity,
                         const std::vector<SliceSample>& slices, double target_mc,
                         const KineticsParams& kinetics, double min_time, double max_time) {
  if (slices.empty()) throw DomainError("run has no slices");
  auto mean_mc = [&](double t) {
    const DryingConditions c{temperature, air_velocity, t};
    double sum = 0.0;
    for (const auto& s : slices) sum += noiseless_final_mc(c, s, kinetics);
    return sum / static_cast<double>(slices.size());
  };
  double lo = min_time;
  double hi = max_time;
  if (!(mean_mc(lo) > target_mc && mean_mc(hi) < target_mc)) {
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "cannot bracket drying time for target MC %.3f at T=%.1f v=%.2f within [%g, %g] min",
                  target_mc, temperature, air_velocity, min_time, max_time);
    throw DomainError(buf);
  }
  for (int i = 0; i < 200 && hi - lo > 1e-10; ++i) {
    const double mid = 0.5 * (lo + hi);
    (mean_mc(mid) > target_mc ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------

double browning_index(const DryingConditions& conditions, double initial_mc, double final_mc,
                      const RenderSpec& spec) {
  const double removed = (initial_mc - final_mc) / initial_mc;
  const double b = spec.browning_temperature_gain * (conditions.temperature - 50.0) / 30.0 +
                   spec.browning_time_gain * conditions.drying_time / 250.0 +
                   spec.browning_moisture_gain * (removed - spec.browning_moisture_offset);
  return std::clamp(b, 0.0, 1.0);
}

bool SliceGeometry::contains(double x, double y) const {
  const double dx = x - center_x;
  const double dy = y - center_y;
  const double r = std::hypot(dx, dy);
  if (r < hole_radius) return false;
  const double theta = std::atan2(dy, dx);
  return r <= outer_radius * (1.0 + perturbation * std::sin(lobes * theta + phase));
}

Mask draw_slice(RgbImage& canvas, const SliceGeometry& g, const std::array<double, 3>& color,
                double pixel_noise_sd, Rng& rng) {
  Mask mask(canvas.width, canvas.height);
  std::normal_distribution<double> normal;
  const double reach = g.outer_radius * (1.0 + g.perturbation) + 1.0;
  const int x0 = std::max(0, static_cast<int>(std::floor(g.center_x - reach)));
  const int x1 = std::min(canvas.width - 1, static_cast<int>(std::ceil(g.center_x + reach)));
  const int y0 = std::max(0, static_cast<int>(std::floor(g.center_y - reach)));
  const int y1 = std::min(canvas.height - 1, static_cast<int>(std::ceil(g.center_y + reach)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      if (!g.contains(x + 0.5, y + 0.5)) continue;
      mask.at(x, y) = 1;
      for (int c = 0; c < 3; ++c) {
        const double v = color[c] + pixel_noise_sd * normal(rng);
        canvas.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
      }
    }
  }
  return mask;
}

RenderedImage render_run_image(const std::vector<SliceSample>& samples,
                               const std::vector<double>& final_mcs,
                               const DryingConditions& conditions, const RenderSpec& spec,
                               const VariabilityParams& variability, Rng& rng) {
  spec.check();
  if (samples.size() != final_mcs.size() || samples.empty()) {
    throw DomainError("render_run_image: one final MC per sample required");
  }
  // Renders are captured under the capture illuminant.
  const auto cast = illuminant_gains(spec.target_cct, spec.capture_cct);
  Rgb background{};
  for (int c = 0; c < 3; ++c) {
    background[c] = static_cast<std::uint8_t>(
        std::clamp(std::round(spec.background[c] * cast[c]), 0.0, 255.0));
  }
  const int n = static_cast<int>(samples.size());
  RenderedImage out;
  out.image.stage = Stage::raw;
  out.image.sample_id = samples.front().sample_id;
  out.image.rgb = RgbImage(spec.canvas_width * n, spec.canvas_height, background);

  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit;
  for (int i = 0; i < n; ++i) {
    const auto& s = samples[i];
    const double mc = final_mcs[i];
    if (!(mc >= 0.0 && mc < 1.0)) throw DomainError("final MC must lie in [0, 1)");

    const double diameter = s.diameter.value_or(70.0);
    const double weight_ratio =
        s.initial_weight > 0.0 && s.final_weight > 0.0 ? s.final_weight / s.initial_weight : 1.0;
    RenderedSlice rs;
    SliceGeometry& g = rs.geometry;
    g.outer_radius = spec.pixels_per_mm * 0.5 * diameter * std::pow(weight_ratio, spec.shrinkage_exponent);
    g.hole_radius = spec.core_hole_fraction * g.outer_radius;
    g.perturbation = spec.boundary_perturbation * (0.5 + 0.5 * unit(rng));
    g.lobes = 3 + static_cast<int>(std::floor(4.0 * unit(rng)));
    g.phase = 2.0 * std::numbers::pi * unit(rng);
    g.center_x = spec.canvas_width * (i + 0.5) + spec.center_jitter * (2.0 * unit(rng) - 1.0);
    g.center_y = spec.canvas_height * 0.5 + spec.center_jitter * (2.0 * unit(rng) - 1.0);

    const double noise = variability.browning_noise_sd * normal(rng);
    rs.browning = std::clamp(browning_index(conditions, s.initial_mc, mc, spec) + noise, 0.0, 1.0);
    for (int c = 0; c < 3; ++c) {
      const double fill =
          spec.base_slice_color[c] + rs.browning * (spec.browning_color[c] - spec.base_slice_color[c]);
      rs.raw_color[c] = fill * cast[c];
    }
    rs.truth_mask = draw_slice(out.image.rgb, g, rs.raw_color, variability.pixel_noise_sd, rng);
    out.slices.push_back(std::move(rs));
  }
  return out;
}

RenderedImage render_slice_image(const SliceSample& sample, double final_mc,
                                 const DryingConditions& conditions, const RenderSpec& spec,
                                 const VariabilityParams& variability, Rng& rng) {
  return render_run_image({sample}, {final_mc}, conditions, spec, variability, rng);
}

// ---------------------------------------------------------------------------

namespace {

SliceSample draw_slice_sample(const SliceStock& stock, const VariabilityParams& var, Rng& rng) {
  std::normal_distribution<double> normal;
  SliceSample s;
  const double thickness = stock.thickness * std::exp(var.thickness_cv * normal(rng));
  const double diameter = stock.diameter * std::exp(var.diameter_cv * normal(rng));
  s.initial_mc = std::clamp(stock.initial_mc + var.initial_mc_sd * normal(rng), 0.5, 0.95);
  const double face_cm2 =
      std::numbers::pi / 4.0 * (diameter * diameter - stock.core_diameter * stock.core_diameter) / 100.0;
  s.initial_weight =
      stock.tissue_density * face_cm2 * (thickness / 10.0) * std::exp(var.weight_cv * normal(rng));
  s.thickness = thickness;
  s.diameter = diameter;
  return s;
}

std::string padded(std::size_t value, int width) {
  std::string s = std::to_string(value);
  if (static_cast<int>(s.size()) < width) s.insert(0, width - s.size(), '0');
  return s;
}

}  // namespace

SimulatedDataset generate_dataset(const SimulatorConfig& config, std::uint64_t seed,
                                  std::size_t max_runs, int slices_override) {
  config.kinetics.check();
  config.variability.check();
  config.render.check();
  const auto& design = config.design;

  SimulatedDataset out;
  std::size_t run_index = 0;
  for (const auto& cell : design.cells) {
    for (int slice_count : cell.run_slices) {
      if (max_runs > 0 && run_index >= max_runs) return out;
      if (slices_override > 0) slice_count = slices_override;
      if (slice_count < 1) throw DomainError("design: runs need at least one slice");

      Rng rng = make_substream(seed, run_index);
      const std::string run_id = "r" + padded(run_index, 3);
      std::vector<SliceSample> slices;
      for (int k = 0; k < slice_count; ++k) {
        SliceSample s = draw_slice_sample(config.stock, config.variability, rng);
        s.run_id = run_id;
        s.sample_id = run_id + "s" + std::to_string(k);
        slices.push_back(std::move(s));
      }

      double time = solve_drying_time(cell.temperature, cell.air_velocity, slices, cell.target_mc,
                                      config.kinetics, design.min_time, design.max_time);
      if (design.time_resolution > 0.0) {
        time = std::round(time / design.time_resolution) * design.time_resolution;
      }
      time = std::clamp(time, design.min_time, design.max_time);
      const DryingConditions conditions{cell.temperature, cell.air_velocity, time};

      for (auto& s : slices) {
        const double mc = simulate_final_mc(conditions, s, config.kinetics, rng);
        s.final_weight = final_weight_for_target_mc(s.initial_weight, s.initial_mc, mc);
      }
      for (auto& s : slices) {
        DryingRecord r;
        r.conditions = conditions;
        r.sample = s;
        r.ground_truth_mc = compute_final_mc(s);
        r.slices_in_run = slice_count;
        r.image_path = "images/" + s.sample_id + ".png";
        out.images.push_back(
            render_slice_image(s, r.ground_truth_mc, conditions, config.render, config.variability, rng));
        out.images.back().image.sample_id = s.sample_id;
        out.records.push_back(std::move(r));
      }
      ++run_index;
    }
  }
  return out;
}

std::string write_dataset(const SimulatedDataset& dataset, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir / "images");
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    write_png(out_dir / dataset.records[i].image_path, dataset.images[i].image.rgb);
  }
  const auto manifest = out_dir / "manifest.csv";
  write_manifest(manifest, dataset.records);
  return dataset_hash(manifest);
}

}  // namespace dryfuse
