#include "dryfuse/baselines.hpp"

#include <gsl/gsl_multimin.h>

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dryfuse {

const char* to_string(DesignMode mode) {
  switch (mode) {
    case DesignMode::tabular_only: return "tabular_only";
    case DesignMode::standard_fusion: return "standard_fusion";
    case DesignMode::simplified_parallel: return "simplified_parallel";
  }
  return "?";
}

const char* to_string(RgbMode mode) {
  return mode == RgbMode::luminance ? "luminance" : "per_channel";
}

RgbMode parse_rgb_mode(const std::string& name) {
  if (name == "luminance") return RgbMode::luminance;
  if (name == "per_channel") return RgbMode::per_channel;
  throw DomainError("unknown rgb mode '" + name + "' (expected luminance or per_channel)");
}

DesignMatrix build_design_matrix(const std::vector<DryingRecord>& records,
                                 const std::vector<SimpleImageFeatures>* features, DesignMode mode,
                                 RgbMode rgb) {
  DesignMatrix m;
  m.mode = mode;
  m.columns = {"temperature_C", "air_velocity_mps", "drying_time_min"};
  const bool with_images = mode != DesignMode::tabular_only;
  if (with_images) {
    if (features == nullptr || features->size() != records.size()) {
      throw MissingFeatures(std::string("design matrix mode ") + to_string(mode) +
                            " needs simple image features for every record");
    }
    if (rgb == RgbMode::luminance) {
      m.columns.push_back("mean_luminance");
    } else {
      m.columns.insert(m.columns.end(), {"mean_r", "mean_g", "mean_b"});
    }
    m.columns.push_back("area_px");
  }
  const auto n = static_cast<Eigen::Index>(records.size());
  m.values.resize(n, static_cast<Eigen::Index>(m.columns.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& c = records[static_cast<std::size_t>(i)].conditions;
    m.values(i, 0) = c.temperature;
    m.values(i, 1) = c.air_velocity;
    m.values(i, 2) = c.drying_time;
    if (!with_images) continue;
    const auto& f = (*features)[static_cast<std::size_t>(i)];
    Eigen::Index j = 3;
    if (rgb == RgbMode::luminance) {
      m.values(i, j++) = f.luminance();
    } else {
      m.values(i, j++) = f.mean_r;
      m.values(i, j++) = f.mean_g;
      m.values(i, j++) = f.mean_b;
    }
    m.values(i, j) = f.area;
  }
  return m;
}

Standardizer Standardizer::fit(const Matrix& rows, const std::vector<Eigen::Index>& subset) {
  if (subset.empty()) throw std::invalid_argument("standardizer: empty fitting subset");
  Standardizer s;
  const Eigen::Index d = rows.cols();
  s.mean = Vector::Zero(d);
  s.scale = Vector::Zero(d);
  for (auto i : subset) s.mean += rows.row(i).transpose();
  s.mean /= static_cast<double>(subset.size());
  for (auto i : subset) s.scale += (rows.row(i).transpose() - s.mean).cwiseAbs2();
  s.scale = (s.scale / static_cast<double>(subset.size())).cwiseSqrt();
  for (Eigen::Index j = 0; j < d; ++j) {
    if (!(s.scale(j) > 1e-12)) s.scale(j) = 1.0;
  }
  return s;
}

Standardizer Standardizer::fit(const Matrix& rows) {
  std::vector<Eigen::Index> all(static_cast<std::size_t>(rows.rows()));
  for (Eigen::Index i = 0; i < rows.rows(); ++i) all[static_cast<std::size_t>(i)] = i;
  return fit(rows, all);
}

Matrix Standardizer::apply(const Matrix& rows) const {
  if (rows.cols() != mean.size()) throw std::invalid_argument("standardizer: column count mismatch");
  return (rows.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
}

// ---------------------------------------------------------------------------

OlsModel fit_ols(const Matrix& x, const Vector& y) {
  if (x.rows() != y.size()) throw std::invalid_argument("ols: row count mismatch");
  if (x.rows() < x.cols() + 1) throw std::invalid_argument("ols: need at least columns + 1 rows");
  Matrix a(x.rows(), x.cols() + 1);
  a.col(0).setOnes();
  a.rightCols(x.cols()) = x;
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(a);
  const Vector beta = cod.solve(y);
  OlsModel m;
  m.intercept = beta(0);
  m.coefficients = beta.tail(x.cols());
  m.rank = cod.rank();
  m.rank_deficient = m.rank < a.cols();
  return m;
}

Vector predict_ols(const OlsModel& model, const Matrix& x) {
  if (x.cols() != model.coefficients.size()) throw std::invalid_argument("ols: column count mismatch");
  return (x * model.coefficients).array() + model.intercept;
}

// ---------------------------------------------------------------------------

double rbf_kernel(const Vector& a, const Vector& b, double signal_variance, double length_scale) {
  return signal_variance * std::exp(-0.5 * (a - b).squaredNorm() / (length_scale * length_scale));
}

double median_pairwise_distance(const Matrix& x) {
  std::vector<double> d;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < x.rows(); ++j) {
      const double v = (x.row(i) - x.row(j)).norm();
      if (v > 0.0) d.push_back(v);
    }
  }
  if (d.empty()) return 1.0;
  const auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  return *mid;
}

namespace {

Matrix gram(const Matrix& x, double sf2, double ell) {
  const Eigen::Index n = x.rows();
  Matrix k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    k(i, i) = sf2;
    for (Eigen::Index j = 0; j < i; ++j) {
      k(i, j) = k(j, i) = sf2 * std::exp(-0.5 * (x.row(i) - x.row(j)).squaredNorm() / (ell * ell));
    }
  }
  return k;
}

struct Factor {
  Eigen::LLT<Matrix> llt;
  double jitter = 0.0;
};

// Cholesky of K + noise I, adding jitter 1e-10, 1e-9, ..., 1e-3 on failure.
Factor factorize(Matrix k, double noise) {
  const Eigen::Index n = k.rows();
  Factor f;
  k.diagonal().array() += noise;
  f.llt.compute(k);
  if (f.llt.info() == Eigen::Success) return f;
  for (double jitter = 1e-10; jitter <= 1e-3 * (1 + 1e-9); jitter *= 10.0) {
    Matrix kj = k;
    kj.diagonal().array() += jitter;
    f.llt.compute(kj);
    if (f.llt.info() == Eigen::Success) {
      f.jitter = jitter;
      return f;
    }
  }
  throw GpNotPositiveDefinite("gp: kernel matrix not positive definite with jitter up to 1e-3 (n=" +
                              std::to_string(n) + ")");
}

double lml_from(const Factor& f, const Vector& y) {
  const Vector alpha = f.llt.solve(y);
  const Matrix l = f.llt.matrixL();
  const double logdet = 2.0 * l.diagonal().array().log().sum();
  return -0.5 * y.dot(alpha) - 0.5 * logdet -
         0.5 * static_cast<double>(y.size()) * std::log(2.0 * std::numbers::pi);
}

struct LmlProblem {
  const Matrix* x;
  const Vector* y;
  double noise_floor;
};

double negative_lml(const gsl_vector* theta, void* data) {
  const auto* p = static_cast<const LmlProblem*>(data);
  const double sf2 = std::exp(gsl_vector_get(theta, 0));
  const double ell = std::exp(gsl_vector_get(theta, 1));
  const double noise = p->noise_floor + std::exp(gsl_vector_get(theta, 2));
  if (!std::isfinite(sf2) || !std::isfinite(ell) || !std::isfinite(noise) || ell < 1e-6) return 1e300;
  try {
    const double v = -gp_log_marginal_likelihood(*p->x, *p->y, sf2, ell, noise);
    return std::isfinite(v) ? v : 1e300;
  } catch (const GpNotPositiveDefinite&) {
    return 1e300;
  }
}

}  // namespace

double gp_log_marginal_likelihood(const Matrix& x, const Vector& y_standardized,
                                  double signal_variance, double length_scale,
                                  double noise_variance) {
  return lml_from(factorize(gram(x, signal_variance, length_scale), noise_variance), y_standardized);
}

GpModel fit_gp(const Matrix& x, const Vector& y, const GpParams& params) {
  if (x.rows() != y.size()) throw std::invalid_argument("gp: row count mismatch");
  if (x.rows() < 2) throw std::invalid_argument("gp: need at least two rows");
  if (!(params.noise_floor > 0.0) || !(params.signal_variance > 0.0) ||
      !(params.length_scale >= 0.0) || !(params.noise_variance >= 0.0)) {
    throw DomainError("gp: hyperparameters must be positive");
  }
  GpModel m;
  m.train_x = x;
  m.target_mean = y.mean();
  const double sd = std::sqrt((y.array() - m.target_mean).square().mean());
  m.target_scale = sd > 1e-12 ? sd : 1.0;
  const Vector ys = (y.array() - m.target_mean) / m.target_scale;

  m.signal_variance = params.signal_variance;
  m.length_scale = params.length_scale > 0.0 ? params.length_scale : median_pairwise_distance(x);
  m.noise_variance = std::max(params.noise_variance, params.noise_floor);

  if (params.optimize) {
    LmlProblem problem{&x, &ys, params.noise_floor};
    gsl_multimin_function fn{&negative_lml, 3, &problem};
    gsl_vector* start = gsl_vector_alloc(3);
    gsl_vector* step = gsl_vector_alloc(3);
    gsl_vector_set(start, 0, std::log(m.signal_variance));
    gsl_vector_set(start, 1, std::log(m.length_scale));
    gsl_vector_set(start, 2, std::log(std::max(m.noise_variance - params.noise_floor, 1e-12)));
    gsl_vector_set_all(step, 0.5);
    gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, 3);
    gsl_multimin_fminimizer_set(s, &fn, start, step);
    for (int iter = 0; iter < 500; ++iter) {
      if (gsl_multimin_fminimizer_iterate(s) != 0) break;
      if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), 1e-6) == GSL_SUCCESS) break;
    }
    if (s->fval < 1e299) {
      m.signal_variance = std::exp(gsl_vector_get(s->x, 0));
      m.length_scale = std::exp(gsl_vector_get(s->x, 1));
      m.noise_variance = params.noise_floor + std::exp(gsl_vector_get(s->x, 2));
    }
    gsl_multimin_fminimizer_free(s);
    gsl_vector_free(start);
    gsl_vector_free(step);
  }

  const Factor f = factorize(gram(x, m.signal_variance, m.length_scale), m.noise_variance);
  m.jitter = f.jitter;
  m.alpha = f.llt.solve(ys);
  m.cholesky_l = f.llt.matrixL();
  m.log_marginal_likelihood = lml_from(f, ys);
  return m;
}

namespace {

Matrix cross_kernel(const GpModel& m, const Matrix& x) {
  if (x.cols() != m.train_x.cols()) throw std::invalid_argument("gp: column count mismatch");
  Matrix k(x.rows(), m.train_x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.train_x.rows(); ++j) {
      k(i, j) = rbf_kernel(x.row(i).transpose(), m.train_x.row(j).transpose(), m.signal_variance,
                           m.length_scale);
    }
  }
  return k;
}

}  // namespace

Vector predict_gp(const GpModel& model, const Matrix& x) {
  return ((cross_kernel(model, x) * model.alpha).array() * model.target_scale + model.target_mean).matrix();
}

Vector predict_gp_variance(const GpModel& model, const Matrix& x) {
  const Matrix ks = cross_kernel(model, x);
  const Matrix v = model.cholesky_l.triangularView<Eigen::Lower>().solve(ks.transpose());
  Vector out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    out(i) = std::max(0.0, model.signal_variance - v.col(i).squaredNorm()) * model.target_scale *
             model.target_scale;
  }
  return out;
}

// ---------------------------------------------------------------------------

TrainingData design_training_data(const Matrix& x, const Vector& y, int tabular_columns) {
  if (x.rows() != y.size()) throw std::invalid_argument("design: row count mismatch");
  TrainingData d;
  d.tabular = x.leftCols(tabular_columns).transpose();
  if (x.cols() > tabular_columns) d.features = x.rightCols(x.cols() - tabular_columns).transpose();
  d.targets = y.transpose();
  return d;
}

std::unique_ptr<MlpModel> fit_nn(const Matrix& x, const Vector& y, const TrainingConfig& config,
                                 int hidden, TrainingHistory* history) {
  auto model = std::make_unique<MlpModel>(static_cast<int>(x.cols()), hidden, config.seed);
  const TrainingData data = design_training_data(x, y, static_cast<int>(x.cols()));
  auto h = train(*model, data, config);
  if (history != nullptr) *history = std::move(h);
  return model;
}

Vector predict_nn(const MlpModel& model, const Matrix& x) {
  const TrainingData data = design_training_data(x, Vector::Zero(x.rows()), static_cast<int>(x.cols()));
  const auto p = predict_each(model, data);
  return Eigen::Map<const Vector>(p.data(), static_cast<Eigen::Index>(p.size()));
}

std::unique_ptr<SimplifiedParallelModel> simplified_parallel_model(const Matrix& x, const Vector& y,
                                                                   const FusionConfig& fusion,
                                                                   const TrainingConfig& config,
                                                                   TrainingHistory* history) {
  if (x.cols() < 4) throw MissingFeatures("simplified parallel model needs image feature columns");
  FusionConfig fc = fusion;
  fc.seed = config.seed;
  auto model = std::make_unique<SimplifiedParallelModel>(fc, 3, static_cast<int>(x.cols()) - 3);
  const TrainingData data = design_training_data(x, y, 3);
  auto h = train(*model, data, config);
  if (history != nullptr) *history = std::move(h);
  return model;
}

Vector predict_simplified_parallel(const SimplifiedParallelModel& model, const Matrix& x) {
  const TrainingData data = design_training_data(x, Vector::Zero(x.rows()), 3);
  const auto p = predict_each(model, data);
  return Eigen::Map<const Vector>(p.data(), static_cast<Eigen::Index>(p.size()));
}

}  // namespace dryfuse
