#include <doctest.h>

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <cmath>
#include <random>

#include "dryfuse/baselines.hpp"
#include "support.hpp"

using namespace dryfuse;

namespace {

Vector normal_equations(const Matrix& x, const Vector& y) {
  Matrix a(x.rows(), x.cols() + 1);
  a.col(0).setOnes();
  a.rightCols(x.cols()) = x;
  return (a.transpose() * a).ldlt().solve(a.transpose() * y);
}

// Posterior mean from an explicit Gram matrix and a general LU solve.
Vector gram_solve_mean(const Matrix& x, const Vector& y, const Matrix& xs, double sf2, double ell,
                       double noise) {
  const double mu = y.mean();
  const double sd = std::sqrt((y.array() - mu).square().mean());
  const Vector ys = (y.array() - mu) / sd;
  auto k = [&](const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
    double d2 = 0.0;
    for (Eigen::Index c = 0; c < a.size(); ++c) d2 += (a(c) - b(c)) * (a(c) - b(c));
    return sf2 * std::exp(-d2 / (2.0 * ell * ell));
  };
  Matrix K(x.rows(), x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.rows(); ++j) K(i, j) = k(x.row(i), x.row(j)) + (i == j ? noise : 0.0);
  const Vector w = K.fullPivLu().solve(ys);
  Vector out(xs.rows());
  for (Eigen::Index i = 0; i < xs.rows(); ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < x.rows(); ++j) s += k(xs.row(i), x.row(j)) * w(j);
    out(i) = mu + sd * s;
  }
  return out;
}

struct Fixture {
  Matrix x, xs;
  Vector y;
};

std::vector<Fixture> gp_fixtures() {
  std::vector<Fixture> out;
  Fixture sin1;
  sin1.x.resize(10, 1);
  sin1.y.resize(10);
  for (int i = 0; i < 10; ++i) {
    sin1.x(i, 0) = i * 0.6;
    sin1.y(i) = std::sin(sin1.x(i, 0));
  }
  sin1.xs = Eigen::VectorXd::LinSpaced(25, -1.0, 7.0);
  out.push_back(sin1);

  std::mt19937_64 rng(4);
  std::normal_distribution<double> n;
  Fixture plane;
  plane.x.resize(15, 3);
  plane.y.resize(15);
  plane.xs.resize(6, 3);
  for (Eigen::Index i = 0; i < 15; ++i) {
    for (int c = 0; c < 3; ++c) plane.x(i, c) = n(rng);
    plane.y(i) = 0.3 * plane.x(i, 0) - plane.x(i, 2) + 0.05 * n(rng);
  }
  for (Eigen::Index i = 0; i < 6; ++i)
    for (int c = 0; c < 3; ++c) plane.xs(i, c) = n(rng);
  out.push_back(plane);

  // Repeated inputs with different targets need the noise term.
  Fixture dup = sin1;
  dup.x(3, 0) = dup.x(4, 0);
  out.push_back(dup);
  return out;
}

}  // namespace

TEST_SUITE("baselines") {

TEST_CASE("design matrices") {
  const auto data = testing::small_dataset(2);
  const auto tab = build_design_matrix(data.records, nullptr, DesignMode::tabular_only);
  CHECK(tab.columns == std::vector<std::string>{"temperature_C", "air_velocity_mps", "drying_time_min"});
  CHECK(tab.values.rows() == static_cast<Eigen::Index>(data.size()));
  CHECK(tab.values(0, 0) == data.records[0].conditions.temperature);
  CHECK(tab.values(0, 2) == data.records[0].conditions.drying_time);

  const auto lum = build_design_matrix(data.records, &data.features, DesignMode::standard_fusion);
  CHECK(lum.columns.size() == 5);
  CHECK(lum.values(1, 3) == doctest::Approx(data.features[1].luminance()));
  CHECK(lum.values(1, 4) == data.features[1].area);
  const auto rgb = build_design_matrix(data.records, &data.features, DesignMode::standard_fusion,
                                       RgbMode::per_channel);
  CHECK(rgb.columns.size() == 7);
  CHECK(rgb.values(1, 5) == data.features[1].mean_b);
  CHECK_THROWS_AS(build_design_matrix(data.records, nullptr, DesignMode::standard_fusion), MissingFeatures);
}

TEST_CASE("standardizer uses population moments") {
  Matrix x(4, 2);
  x << 1, 5, 2, 5, 3, 5, 4, 5;
  const auto s = Standardizer::fit(x);
  CHECK(s.mean(0) == 2.5);
  CHECK(s.scale(0) == doctest::Approx(std::sqrt(1.25)));
  CHECK(s.scale(1) == 1.0);
  const Matrix z = s.apply(x);
  CHECK(z.col(0).mean() == doctest::Approx(0.0));
  CHECK(z.col(1).cwiseAbs().maxCoeff() == 0.0);
  // Fitting on a subset only looks at those rows.
  const auto sub = Standardizer::fit(x, {0, 1});
  CHECK(sub.mean(0) == 1.5);
}

TEST_CASE("ols matches the normal equations") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 5; ++trial) {
    const int rows = 20 + 7 * trial, cols = 1 + trial;
    Matrix x(rows, cols);
    Vector y(rows);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
    for (int i = 0; i < rows; ++i) y(i) = 0.4 + x.row(i).sum() * 0.3 + 0.1 * n(rng);
    const auto m = fit_ols(x, y);
    const Vector beta = normal_equations(x, y);
    CHECK(std::abs(m.intercept - beta(0)) < 1e-8);
    CHECK((m.coefficients - beta.tail(cols)).cwiseAbs().maxCoeff() < 1e-8);
    CHECK_FALSE(m.rank_deficient);
    const Vector pred = predict_ols(m, x);
    CHECK(std::abs(pred(0) - (beta(0) + x.row(0).dot(beta.tail(cols)))) < 1e-8);
  }
}

TEST_CASE("ols flags collinear designs") {
  Matrix x(10, 2);
  for (int i = 0; i < 10; ++i) x(i, 0) = x(i, 1) = i;
  Vector y = x.col(0) * 2.0;
  const auto m = fit_ols(x, y);
  CHECK(m.rank_deficient);
  CHECK((predict_ols(m, x) - y).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("nested designs never fit worse in sample") {
  const auto data = testing::small_dataset(8);
  const auto small = build_design_matrix(data.records, nullptr, DesignMode::tabular_only);
  const auto big = build_design_matrix(data.records, &data.features, DesignMode::standard_fusion);
  Vector y(static_cast<Eigen::Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) y(static_cast<Eigen::Index>(i)) = data.records[i].ground_truth_mc;
  const double sse_small = (predict_ols(fit_ols(small.values, y), small.values) - y).squaredNorm();
  const double sse_big = (predict_ols(fit_ols(big.values, y), big.values) - y).squaredNorm();
  CHECK(sse_big <= sse_small + 1e-12);
}

TEST_CASE("gp mean matches the Gram-solve oracle") {
  for (const auto& f : gp_fixtures()) {
    GpParams fixed;
    fixed.signal_variance = 1.3;
    fixed.length_scale = 0.9;
    fixed.noise_variance = 0.01;
    fixed.optimize = false;
    const auto m = fit_gp(f.x, f.y, fixed);
    const Vector ref = gram_solve_mean(f.x, f.y, f.xs, 1.3, 0.9, 0.01);
    CHECK((predict_gp(m, f.xs) - ref).cwiseAbs().maxCoeff() < 1e-8);

    // Same check at the optimised hyperparameters.
    const auto opt = fit_gp(f.x, f.y, GpParams{});
    const Vector ref2 = gram_solve_mean(f.x, f.y, f.xs, opt.signal_variance, opt.length_scale,
                                        opt.noise_variance + opt.jitter);
    CHECK((predict_gp(opt, f.xs) - ref2).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("gp optimisation does not lower the marginal likelihood") {
  const auto f = gp_fixtures()[0];
  GpParams p;
  p.optimize = false;
  const auto start = fit_gp(f.x, f.y, p);
  const auto opt = fit_gp(f.x, f.y, GpParams{});
  CHECK(opt.log_marginal_likelihood >= start.log_marginal_likelihood);
  CHECK(start.length_scale == doctest::Approx(median_pairwise_distance(f.x)));
}

TEST_CASE("gp interpolates with vanishing noise and reverts far away") {
  const auto f = gp_fixtures()[0];
  GpParams p;
  p.optimize = false;
  p.length_scale = 1.0;
  p.noise_variance = 0.0;
  p.noise_floor = 1e-10;
  const auto m = fit_gp(f.x, f.y, p);
  CHECK((predict_gp(m, f.x) - f.y).cwiseAbs().maxCoeff() < 1e-5);
  Matrix far(1, 1);
  far(0, 0) = 1e3;
  CHECK(predict_gp(m, far)(0) == doctest::Approx(f.y.mean()).epsilon(1e-12));
  CHECK(predict_gp_variance(m, far)(0) ==
        doctest::Approx(m.signal_variance * m.target_scale * m.target_scale).epsilon(1e-9));
  CHECK(predict_gp_variance(m, f.x).maxCoeff() < 1e-6);
}

TEST_CASE("gp input checks") {
  Matrix x(1, 1);
  Vector y(1);
  CHECK_THROWS(fit_gp(x, y, GpParams{}));
  GpParams bad;
  bad.signal_variance = -1.0;
  CHECK_THROWS_AS(fit_gp(Matrix::Random(4, 1), Vector::Random(4), bad), DomainError);
}

TEST_CASE("nn baseline learns a linear target and is reproducible") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix x(64, 3);
  Vector y(64);
  for (int i = 0; i < 64; ++i) {
    for (int c = 0; c < 3; ++c) x(i, c) = u(rng);
    y(i) = 0.4 + 0.1 * x(i, 0) - 0.05 * x(i, 2);
  }
  TrainingConfig cfg;
  cfg.learning_rate = 3e-3;
  cfg.epochs = 400;
  cfg.batch_size = 16;
  cfg.seed = 9;
  TrainingHistory h;
  const auto m = fit_nn(x, y, cfg, 32, &h);
  const double rmse = std::sqrt((predict_nn(*m, x) - y).squaredNorm() / 64.0);
  CHECK(rmse < 0.01);
  CHECK(h.epoch_loss.back() < h.epoch_loss.front());
  const auto again = fit_nn(x, y, cfg, 32);
  CHECK((predict_nn(*again, x) - predict_nn(*m, x)).cwiseAbs().maxCoeff() == 0.0);

  // A constant target is matched from the first epoch thanks to the output bias.
  const Vector c = Vector::Constant(64, 0.3);
  TrainingHistory hc;
  const auto mc = fit_nn(x, c, cfg, 32, &hc);
  CHECK((predict_nn(*mc, x).array() - 0.3).abs().maxCoeff() < 0.01);
}

TEST_CASE("simplified parallel model responds to its feature branch") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix x(32, 5);
  Vector y(32);
  for (int i = 0; i < 32; ++i) {
    for (int c = 0; c < 5; ++c) x(i, c) = u(rng);
    y(i) = 0.3 + 0.1 * x(i, 3);
  }
  TrainingConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 1;
  const auto m = simplified_parallel_model(x, y, testing::small_fusion_config(), cfg);
  // Same inputs give the same output regardless of batch neighbours.
  Matrix pair(2, 5);
  pair.row(0) = x.row(0);
  pair.row(1) = x.row(0);
  const Vector p = predict_simplified_parallel(*m, pair);
  CHECK(p(0) == p(1));
  CHECK(p(0) == predict_simplified_parallel(*m, x)(0));
  // Changing only the image features moves the prediction.
  pair.row(1).tail(2).setZero();
  const Vector q = predict_simplified_parallel(*m, pair);
  CHECK(q(0) != q(1));
  CHECK_THROWS_AS(simplified_parallel_model(x.leftCols(3), y, testing::small_fusion_config(), cfg),
                  MissingFeatures);
}

}  // TEST_SUITE
