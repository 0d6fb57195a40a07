#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "dryfuse/config.hpp"
#include "dryfuse/dataset.hpp"
#include "dryfuse/models.hpp"
#include "dryfuse/simulator.hpp"

namespace dryfuse::testing {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_param;
  double worst_analytic = 0.0, worst_numeric = 0.0;
  std::size_t checked = 0;
  std::size_t kinks = 0;  // elements re-measured with the small step
};

// Central differences on L = 0.5 * sum((f(x) - target)^2) over every
// parameter element of the model. The step sits near cbrt(machine epsilon);
// smaller steps are swamped by rounding in the loss. When the quotients at h
// and h/2 disagree a ReLU switched inside the step; that element is measured
// again at h/100. The choice never looks at the analytic value.
inline GradCheckResult gradient_check(Regressor& model, const Batch& batch, double target,
                                      double step = 1e-5, double floor = 1e-7) {
  auto loss = [&] {
    const RowVector p = model.predict(batch);
    return 0.5 * (p.array() - target).square().sum();
  };
  auto params = model.params();
  for (auto* p : params) p->zero_grad();
  const RowVector pred = model.forward_train(batch);
  model.backward((pred.array() - target).matrix());

  GradCheckResult r;
  for (auto* p : params) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      double& w = p->value.data()[i];
      const double saved = w;
      // One-sided quotients agree to O(h) on smooth stretches. When they
      // disagree a ReLU boundary sits inside [w-h, w+h]; shrink h until it
      // drops out. Only the loss is consulted, never the analytic gradient.
      const double mid = loss();
      double h = step, numeric = 0.0;
      bool kinked = false;
      for (;;) {
        w = saved + h;
        const double up = loss();
        w = saved - h;
        const double down = loss();
        w = saved;
        const double fwd = (up - mid) / h, bwd = (mid - down) / h;
        numeric = 0.5 * (fwd + bwd);
        if (std::abs(fwd - bwd) <= 2e-5 * std::max(std::abs(fwd), std::abs(bwd)) + 1e-9 || h < 1e-9) break;
        kinked = true;
        h *= 0.1;
      }
      if (kinked) ++r.kinks;
      const double analytic = p->grad.data()[i];
      const double rel = std::abs(numeric - analytic) /
                         std::max({std::abs(numeric), std::abs(analytic), floor});
      if (rel > r.max_relative_error) {
        r.max_relative_error = rel;
        r.worst_param = p->name + "[" + std::to_string(i) + "]";
        r.worst_analytic = analytic;
        r.worst_numeric = numeric;
      }
      ++r.checked;
    }
  }
  return r;
}

// Zero-initialised biases on zeroed background pixels put pre-activations
// exactly on the ReLU kink, where one-sided differences disagree with any
// subgradient. Moving biases off zero makes the check meaningful.
inline void jitter_biases(Regressor& model, std::uint64_t seed = 99, double scale = 0.05) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto* p : model.params()) {
    if (p->name.size() >= 4 && p->name.compare(p->name.size() - 4, 4, "bias") == 0) {
      for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = u(rng);
    }
  }
}

// Small fusion network on the tiny encoder topology.
inline FusionConfig small_fusion_config(std::uint64_t seed = 7) {
  FusionConfig c;
  c.tabular_hidden = 24;
  c.embedding_dim = 12;
  c.fused_dim = 18;
  c.ratio = {8, 1};
  c.encoder_preset = EncoderPreset::tiny;
  c.seed = seed;
  return c;
}

// One simulated run, preprocessed; the first `runs` runs of the default design.
inline PreparedDataset small_dataset(std::size_t runs = 2, std::uint64_t seed = 42) {
  const RunConfig cfg = default_config();
  const auto sim = generate_dataset(cfg.simulator(), seed, runs);
  return prepare_dataset(sim, cfg.preprocess, EncoderPreset::tiny);
}

// Full 3x2 condition grid with two runs (1 and 2 slices) per cell: 36 records.
inline PreparedDataset compact_benchmark(std::uint64_t seed = 42) {
  RunConfig cfg = default_config();
  cfg.design.run_slices = {1, 2};
  const auto sim = generate_dataset(cfg.simulator(), seed);
  return prepare_dataset(sim, cfg.preprocess, EncoderPreset::tiny);
}

inline Batch single_batch(const PreparedDataset& data, std::size_t i, const Vector& tabular) {
  Batch b;
  b.tabular = tabular;
  b.images.batch = 1;
  b.images.height = data.image_size;
  b.images.width = data.image_size;
  b.images.data = data.images[i];
  return b;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("dryfuse_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace dryfuse::testing
