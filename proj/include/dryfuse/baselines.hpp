#pragma once

#include <memory>
#include <string>
#include <vector>

#include "dryfuse/domain.hpp"
#include "dryfuse/imaging.hpp"
#include "dryfuse/models.hpp"
#include "dryfuse/training.hpp"

namespace dryfuse {

enum class DesignMode { tabular_only, standard_fusion, simplified_parallel };
enum class RgbMode { luminance, per_channel };

const char* to_string(DesignMode mode);
const char* to_string(RgbMode mode);
RgbMode parse_rgb_mode(const std::string& name);

class MissingFeatures : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Rows are records. Raw (unstandardized) until a Standardizer is applied.
struct DesignMatrix {
  DesignMode mode = DesignMode::tabular_only;
  std::vector<std::string> columns;
  Matrix values;  // records x columns
};

// tabular_only: T, v, t. standard_fusion and simplified_parallel: T, v, t,
// luminance, area (or T, v, t, R, G, B, area in per_channel mode).
DesignMatrix build_design_matrix(const std::vector<DryingRecord>& records,
                                 const std::vector<SimpleImageFeatures>* features, DesignMode mode,
                                 RgbMode rgb = RgbMode::luminance);

// Column means and population standard deviations (constant columns get
// scale 1).
struct Standardizer {
  Vector mean;
  Vector scale;

  static Standardizer fit(const Matrix& rows, const std::vector<Eigen::Index>& subset);
  static Standardizer fit(const Matrix& rows);
  Matrix apply(const Matrix& rows) const;
  bool empty() const { return mean.size() == 0; }
};

// ---------------------------------------------------------------------------
// Ordinary least squares with intercept

struct OlsModel {
  double intercept = 0.0;
  Vector coefficients;
  Eigen::Index rank = 0;
  bool rank_deficient = false;
};

OlsModel fit_ols(const Matrix& x, const Vector& y);
Vector predict_ols(const OlsModel& model, const Matrix& x);

// ---------------------------------------------------------------------------
// Gaussian process, isotropic RBF kernel, zero mean on standardized targets

struct GpParams {
  double signal_variance = 1.0;
  double length_scale = 0.0;  // 0 selects the median pairwise distance
  double noise_variance = 0.1;
  double noise_floor = 1e-6;
  bool optimize = true;
};

class GpNotPositiveDefinite : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GpModel {
  Matrix train_x;  // n x d
  Vector alpha;    // (K + s I)^-1 y_standardized
  Matrix cholesky_l;
  double signal_variance = 1.0;
  double length_scale = 1.0;
  double noise_variance = 1e-6;
  double jitter = 0.0;
  double target_mean = 0.0;
  double target_scale = 1.0;
  double log_marginal_likelihood = 0.0;
};

double rbf_kernel(const Vector& a, const Vector& b, double signal_variance, double length_scale);
double median_pairwise_distance(const Matrix& x);
// Log marginal likelihood of standardized targets under the given
// hyperparameters; throws GpNotPositiveDefinite when no jitter up to 1e-3
// makes the Gram matrix factorizable.
double gp_log_marginal_likelihood(const Matrix& x, const Vector& y_standardized,
                                  double signal_variance, double length_scale,
                                  double noise_variance);

GpModel fit_gp(const Matrix& x, const Vector& y, const GpParams& params);
Vector predict_gp(const GpModel& model, const Matrix& x);
// Posterior variance in target units.
Vector predict_gp_variance(const GpModel& model, const Matrix& x);

// ---------------------------------------------------------------------------
// Fully connected network on a design matrix

std::unique_ptr<MlpModel> fit_nn(const Matrix& x, const Vector& y, const TrainingConfig& config,
                                 int hidden, TrainingHistory* history = nullptr);
Vector predict_nn(const MlpModel& model, const Matrix& x);

// ---------------------------------------------------------------------------
// Tabular + simplified-feature parallel fusion

// `x` is a simplified_parallel design matrix (already standardized); the
// first three columns feed the tabular branch and the rest the feature branch.
std::unique_ptr<SimplifiedParallelModel> simplified_parallel_model(const Matrix& x, const Vector& y,
                                                                   const FusionConfig& fusion,
                                                                   const TrainingConfig& config,
                                                                   TrainingHistory* history = nullptr);
Vector predict_simplified_parallel(const SimplifiedParallelModel& model, const Matrix& x);

// Splits a records x columns matrix into the column-batched training layout.
TrainingData design_training_data(const Matrix& x, const Vector& y, int tabular_columns);

}  // namespace dryfuse
