#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dryfuse/domain.hpp"
#include "dryfuse/image.hpp"
#include "dryfuse/rng.hpp"

namespace dryfuse {

// Page-type thin-layer kinetics: MR = exp(-k t^n) with
// k = a exp(-Ea/R / T_K) v^b L^-c, L the slice thickness in mm.
struct KineticsParams {
  double pre_exponential = 0.0;         // a
  double activation_temperature = 0.0;  // Ea / R, kelvin
  double velocity_exponent = 0.0;       // b
  double page_exponent = 1.0;           // n
  double thickness_exponent = 0.0;      // c
  double equilibrium_mc = 0.0;
  double reference_thickness = 5.0;  // mm, used when a sample has no thickness
  double rate_noise_sd = 0.0;        // sd of the lognormal multiplier on k

  void check() const;
};

// Spread of the slice population around its nominal values.
struct VariabilityParams {
  double thickness_cv = 0.0;
  double weight_cv = 0.0;
  double diameter_cv = 0.0;
  double initial_mc_sd = 0.0;
  double pixel_noise_sd = 0.0;     // 8-bit intensity units
  double browning_noise_sd = 0.0;  // browning-index units

  void check() const;
};

// Nominal geometry and composition of a freshly cut slice.
struct SliceStock {
  double thickness = 5.0;        // mm
  double diameter = 70.0;        // mm
  double core_diameter = 25.0;   // mm
  double initial_mc = 0.85;
  double tissue_density = 0.80;  // g / cm^3
};

struct RenderSpec {
  int canvas_width = 320;
  int canvas_height = 320;
  Rgb background{0, 0, 0};
  Rgb base_slice_color{0, 0, 0};
  Rgb browning_color{0, 0, 0};
  // Coring-hole radius as a fraction of the outer radius.
  double core_hole_fraction = 0.0;
  // Outer radius scales with (final / initial weight)^shrinkage_exponent.
  double shrinkage_exponent = 0.0;
  double pixels_per_mm = 1.0;
  // Relative amplitude of the sinusoidal boundary perturbation.
  double boundary_perturbation = 0.0;
  double center_jitter = 0.0;  // pixels
  // Browning index = temperature_gain (T-50)/30 + time_gain t/250
  //                  + moisture_gain ((mc0 - mc)/mc0 - moisture_offset) + noise, clipped to [0,1].
  double browning_temperature_gain = 0.0;
  double browning_time_gain = 0.0;
  double browning_moisture_gain = 0.0;
  double browning_moisture_offset = 0.0;
  // Raw images carry this illuminant cast relative to `target_cct`.
  double capture_cct = 5000.0;
  double target_cct = 6500.0;

  void check() const;
};

struct DesignCell {
  double temperature = 60.0;
  double air_velocity = 1.5;
  double target_mc = 0.10;
  std::vector<int> run_slices;  // slices per run, one entry per run
};

struct ExperimentDesign {
  std::vector<DesignCell> cells;
  double min_time = 1.0;    // bisection bracket, minutes
  double max_time = 400.0;
  double time_resolution = 1.0;  // drying times are rounded to this many minutes

  std::size_t run_count() const;
  std::size_t slice_count() const;
};

// ---------------------------------------------------------------------------
// Kinetics

double drying_rate_constant(const DryingConditions& conditions, double thickness,
                            const KineticsParams& kinetics);

// Noiseless kinetics core. drying_time must be positive.
double noiseless_final_mc(const DryingConditions& conditions, const SliceSample& sample,
                          const KineticsParams& kinetics);

// Kinetics core with a lognormal multiplier on k drawn from rng.
double simulate_final_mc(const DryingConditions& conditions, const SliceSample& sample,
                         const KineticsParams& kinetics, Rng& rng);

// Drying time at which the run's mean noiseless moisture content equals
// target_mc. Throws DomainError if the target is not bracketed.
double solve_drying_time(double temperature, double air_velocity,
                         const std::vector<SliceSample>& slices, double target_mc,
                         const KineticsParams& kinetics, double min_time, double max_time);

// ---------------------------------------------------------------------------
// Rendering

double browning_index(const DryingConditions& conditions, double initial_mc, double final_mc,
                      const RenderSpec& spec);

struct SliceGeometry {
  double center_x = 0.0;
  double center_y = 0.0;
  double outer_radius = 0.0;  // pixels
  double hole_radius = 0.0;   // pixels
  double perturbation = 0.0;  // relative amplitude
  int lobes = 4;
  double phase = 0.0;

  bool contains(double x, double y) const;
};

// Paints one slice (pixel centres inside the geometry) with `color` plus
// Gaussian noise; returns the ground-truth mask.
Mask draw_slice(RgbImage& canvas, const SliceGeometry& geometry, const std::array<double, 3>& color,
                double pixel_noise_sd, Rng& rng);

struct RenderedSlice {
  SliceGeometry geometry;
  Mask truth_mask;
  double browning = 0.0;
  // Expected raw pixel colour inside the slice before noise and quantisation.
  std::array<double, 3> raw_color{};
};

struct RenderedImage {
  SliceImage image;  // stage raw
  std::vector<RenderedSlice> slices;
};

// Renders the given slices of one run side by side (left to right in input
// order) on a canvas of width canvas_width * slices.size().
RenderedImage render_run_image(const std::vector<SliceSample>& samples,
                               const std::vector<double>& final_mcs,
                               const DryingConditions& conditions, const RenderSpec& spec,
                               const VariabilityParams& variability, Rng& rng);

RenderedImage render_slice_image(const SliceSample& sample, double final_mc,
                                 const DryingConditions& conditions, const RenderSpec& spec,
                                 const VariabilityParams& variability, Rng& rng);

// ---------------------------------------------------------------------------
// Datasets

struct SimulatorConfig {
  KineticsParams kinetics;
  VariabilityParams variability;
  SliceStock stock;
  RenderSpec render;
  ExperimentDesign design;
};

struct SimulatedDataset {
  std::vector<DryingRecord> records;
  std::vector<RenderedImage> images;  // one per record, same order
};

// Deterministic in (config, seed); each run draws from its own substream.
// `max_runs` > 0 truncates the design; `slices_override` > 0 replaces every
// run's slice count.
SimulatedDataset generate_dataset(const SimulatorConfig& config, std::uint64_t seed,
                                  std::size_t max_runs = 0, int slices_override = 0);

// Writes manifest.csv and images/<sample_id>.png under out_dir; returns the
// dataset hash.
std::string write_dataset(const SimulatedDataset& dataset, const std::filesystem::path& out_dir);

}  // namespace dryfuse
