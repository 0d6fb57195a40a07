#pragma once

#include <Eigen/Core>

#include <string>
#include <vector>

#include "dryfuse/rng.hpp"

namespace dryfuse::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

struct Param {
  std::string name;
  Matrix value;
  Matrix grad;

  void resize(Eigen::Index rows, Eigen::Index cols) {
    value = Matrix::Zero(rows, cols);
    grad = Matrix::Zero(rows, cols);
  }
  void zero_grad() { grad.setZero(); }
};

enum class Init { he, lecun, zero };

void init_param(Param& p, Eigen::Index fan_in, Init init, Rng& rng);

// Dense layer on column-batched features: Y = W X + b, X is (in x batch).
class Linear {
 public:
  Linear() = default;
  Linear(std::string name, int in, int out);

  void init(Init init, Rng& rng);
  Matrix forward(const Matrix& x) const;
  // Accumulates parameter gradients; returns dL/dX when want_dx.
  Matrix backward(const Matrix& x, const Matrix& dy, bool want_dx = true);

  int in() const { return static_cast<int>(weight_.value.cols()); }
  int out() const { return static_cast<int>(weight_.value.rows()); }
  Param& weight() { return weight_; }
  Param& bias() { return bias_; }
  const Param& weight() const { return weight_; }
  void collect(std::vector<Param*>& out);

 private:
  Param weight_;
  Param bias_;
};

Matrix relu(const Matrix& x);
// dL/dx for y = relu(x), given y.
Matrix relu_backward(const Matrix& y, const Matrix& dy);
Matrix sigmoid(const Matrix& x);

// Batch of feature maps: rows are (sample, y, x) positions in row-major order
// within each sample, columns are channels.
struct FeatureMap {
  Matrix data;
  int batch = 0;
  int height = 0;
  int width = 0;

  int channels() const { return static_cast<int>(data.cols()); }
  Eigen::Index positions() const { return static_cast<Eigen::Index>(batch) * height * width; }
};

struct ConvShape {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int padding = 1;
};

// 2-D convolution via im2col; weight is (in * k * k) x out.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, ConvShape shape);

  void init(Init init, Rng& rng);

  // Holds the full im2col matrix when it fits the scratch budget, otherwise
  // the raw input for chunked recomputation in backward.
  struct Trace {
    Matrix cols;
    Matrix input;
    int in_height = 0;
    int in_width = 0;
    int batch = 0;
  };

  FeatureMap forward(const FeatureMap& x, Trace* trace) const;
  // Returns dL/dX (empty when !want_dx).
  FeatureMap backward(const Trace& trace, const FeatureMap& dy, bool want_dx = true);

  const ConvShape& shape() const { return shape_; }
  Param& weight() { return weight_; }
  Param& bias() { return bias_; }
  void collect(std::vector<Param*>& out);

 private:
  ConvShape shape_;
  Param weight_;
  Param bias_;
};

int conv_output_size(int in, int kernel, int stride, int padding);

// Non-overlapping average pooling by `factor` (trailing rows/cols dropped).
FeatureMap avg_pool(const FeatureMap& x, int factor);

struct MaxPoolTrace {
  std::vector<Eigen::Index> argmax;  // per output element, flat index into input data
  int in_height = 0;
  int in_width = 0;
};

FeatureMap max_pool(const FeatureMap& x, int kernel, int stride, int padding, MaxPoolTrace* trace);
FeatureMap max_pool_backward(const MaxPoolTrace& trace, const FeatureMap& dy, int in_channels);

// (batch*h*w x c) -> (c x batch)
Matrix global_avg_pool(const FeatureMap& x);
FeatureMap global_avg_pool_backward(const Matrix& dy, int batch, int height, int width);

// Two 3x3 convolutions with an identity or 1x1-projection shortcut.
class BasicBlock {
 public:
  BasicBlock() = default;
  BasicBlock(const std::string& name, int in_channels, int out_channels, int stride);

  void init(Rng& rng, double residual_scale);

  struct Trace {
    Conv2d::Trace conv1, conv2, shortcut;
    FeatureMap hidden;  // relu(conv1(x))
    FeatureMap out;     // relu(conv2(.) + shortcut(x))
  };

  FeatureMap forward(const FeatureMap& x, Trace* trace) const;
  FeatureMap backward(const Trace& trace, const FeatureMap& dy, bool want_dx = true);
  void collect(std::vector<Param*>& out);

 private:
  Conv2d conv1_;
  Conv2d conv2_;
  bool project_ = false;
  Conv2d shortcut_;
};

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<Param*> params, AdamOptions options);
  void zero_grad();
  void step();

 private:
  std::vector<Param*> params_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  AdamOptions options_;
  long step_count_ = 0;
};

std::size_t parameter_count(const std::vector<Param*>& params);

}  // namespace dryfuse::nn
