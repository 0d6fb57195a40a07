#include "dryfuse/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dryfuse::nn {

void init_param(Param& p, Eigen::Index fan_in, Init init, Rng& rng) {
  if (init == Init::zero || fan_in <= 0) {
    p.value.setZero();
    return;
  }
  const double scale = std::sqrt((init == Init::he ? 2.0 : 1.0) / static_cast<double>(fan_in));
  std::normal_distribution<double> normal(0.0, scale);
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = normal(rng);
}

std::size_t parameter_count(const std::vector<Param*>& params) {
  std::size_t n = 0;
  for (const auto* p : params) n += static_cast<std::size_t>(p->value.size());
  return n;
}

// ---------------------------------------------------------------------------

Linear::Linear(std::string name, int in, int out) {
  weight_.name = name + ".weight";
  bias_.name = name + ".bias";
  weight_.resize(out, in);
  bias_.resize(out, 1);
}

void Linear::init(Init init, Rng& rng) {
  init_param(weight_, weight_.value.cols(), init, rng);
  bias_.value.setZero();
}

Matrix Linear::forward(const Matrix& x) const {
  if (x.rows() != weight_.value.cols()) {
    throw std::invalid_argument(weight_.name + ": expected input dimension " +
                                std::to_string(weight_.value.cols()) + ", got " +
                                std::to_string(x.rows()));
  }
  Matrix y(weight_.value.rows(), x.cols());
  y.noalias() = weight_.value * x;
  y.colwise() += bias_.value.col(0);
  return y;
}

Matrix Linear::backward(const Matrix& x, const Matrix& dy, bool want_dx) {
  weight_.grad.noalias() += dy * x.transpose();
  bias_.grad.col(0) += dy.rowwise().sum();
  if (!want_dx) return {};
  Matrix dx(x.rows(), x.cols());
  dx.noalias() = weight_.value.transpose() * dy;
  return dx;
}

void Linear::collect(std::vector<Param*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }

Matrix relu_backward(const Matrix& y, const Matrix& dy) {
  return (y.array() > 0.0).select(dy, 0.0);
}

Matrix sigmoid(const Matrix& x) {
  return x.unaryExpr([](double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
}

// ---------------------------------------------------------------------------

int conv_output_size(int in, int kernel, int stride, int padding) {
  return (in + 2 * padding - kernel) / stride + 1;
}

namespace {

// Upper bound on im2col scratch per chunk, in doubles.
constexpr Eigen::Index kColsBudget = 1 << 22;

void im2col(const FeatureMap& x, const ConvShape& s, int b0, int b1, Matrix& cols) {
  const int H = x.height, W = x.width;
  const int Ho = conv_output_size(H, s.kernel, s.stride, s.padding);
  const int Wo = conv_output_size(W, s.kernel, s.stride, s.padding);
  const Eigen::Index per = static_cast<Eigen::Index>(Ho) * Wo;
  cols.resize(per * (b1 - b0), static_cast<Eigen::Index>(s.in_channels) * s.kernel * s.kernel);
  for (int c = 0; c < s.in_channels; ++c) {
    const double* src = x.data.col(c).data();
    for (int ky = 0; ky < s.kernel; ++ky) {
      for (int kx = 0; kx < s.kernel; ++kx) {
        double* dst = cols.col((c * s.kernel + ky) * s.kernel + kx).data();
        for (int b = b0; b < b1; ++b) {
          const double* plane = src + static_cast<Eigen::Index>(b) * H * W;
          for (int oy = 0; oy < Ho; ++oy) {
            const int iy = oy * s.stride - s.padding + ky;
            if (iy < 0 || iy >= H) {
              std::fill(dst, dst + Wo, 0.0);
              dst += Wo;
              continue;
            }
            const double* row = plane + static_cast<Eigen::Index>(iy) * W;
            for (int ox = 0; ox < Wo; ++ox) {
              const int ix = ox * s.stride - s.padding + kx;
              *dst++ = (ix >= 0 && ix < W) ? row[ix] : 0.0;
            }
          }
        }
      }
    }
  }
}

void col2im(const Matrix& dcols, const ConvShape& s, int b0, int b1, FeatureMap& dx) {
  const int H = dx.height, W = dx.width;
  const int Ho = conv_output_size(H, s.kernel, s.stride, s.padding);
  const int Wo = conv_output_size(W, s.kernel, s.stride, s.padding);
  for (int c = 0; c < s.in_channels; ++c) {
    double* dst = dx.data.col(c).data();
    for (int ky = 0; ky < s.kernel; ++ky) {
      for (int kx = 0; kx < s.kernel; ++kx) {
        const double* src = dcols.col((c * s.kernel + ky) * s.kernel + kx).data();
        for (int b = b0; b < b1; ++b) {
          double* plane = dst + static_cast<Eigen::Index>(b) * H * W;
          for (int oy = 0; oy < Ho; ++oy) {
            const int iy = oy * s.stride - s.padding + ky;
            if (iy < 0 || iy >= H) {
              src += Wo;
              continue;
            }
            double* row = plane + static_cast<Eigen::Index>(iy) * W;
            for (int ox = 0; ox < Wo; ++ox) {
              const int ix = ox * s.stride - s.padding + kx;
              if (ix >= 0 && ix < W) row[ix] += *src;
              ++src;
            }
          }
        }
      }
    }
  }
}

int chunk_size(const ConvShape& s, int Ho, int Wo, int batch) {
  const Eigen::Index per = static_cast<Eigen::Index>(Ho) * Wo * s.in_channels * s.kernel * s.kernel;
  return std::clamp(static_cast<int>(kColsBudget / std::max<Eigen::Index>(per, 1)), 1, batch);
}

}  // namespace

Conv2d::Conv2d(std::string name, ConvShape shape) : shape_(shape) {
  weight_.name = name + ".weight";
  bias_.name = name + ".bias";
  weight_.resize(static_cast<Eigen::Index>(shape.in_channels) * shape.kernel * shape.kernel,
                 shape.out_channels);
  bias_.resize(1, shape.out_channels);
}

void Conv2d::init(Init init, Rng& rng) {
  init_param(weight_, weight_.value.rows(), init, rng);
  bias_.value.setZero();
}

FeatureMap Conv2d::forward(const FeatureMap& x, Trace* trace) const {
  if (x.channels() != shape_.in_channels) {
    throw std::invalid_argument(weight_.name + ": channel mismatch");
  }
  const int Ho = conv_output_size(x.height, shape_.kernel, shape_.stride, shape_.padding);
  const int Wo = conv_output_size(x.width, shape_.kernel, shape_.stride, shape_.padding);
  FeatureMap y;
  y.batch = x.batch;
  y.height = Ho;
  y.width = Wo;
  y.data.resize(static_cast<Eigen::Index>(x.batch) * Ho * Wo, shape_.out_channels);
  const Eigen::Index per = static_cast<Eigen::Index>(Ho) * Wo;
  const int chunk = chunk_size(shape_, Ho, Wo, x.batch);
  const bool keep = trace && chunk == x.batch;
  Matrix cols;
  for (int b0 = 0; b0 < x.batch; b0 += chunk) {
    const int b1 = std::min(x.batch, b0 + chunk);
    im2col(x, shape_, b0, b1, cols);
    y.data.middleRows(b0 * per, (b1 - b0) * per).noalias() = cols * weight_.value;
  }
  y.data.rowwise() += bias_.value.row(0);
  if (trace) {
    trace->in_height = x.height;
    trace->in_width = x.width;
    trace->batch = x.batch;
    if (keep) {
      trace->cols = std::move(cols);
      trace->input.resize(0, 0);
    } else {
      trace->cols.resize(0, 0);
      trace->input = x.data;
    }
  }
  return y;
}

FeatureMap Conv2d::backward(const Trace& trace, const FeatureMap& dy, bool want_dx) {
  const int Ho = dy.height, Wo = dy.width;
  const Eigen::Index per = static_cast<Eigen::Index>(Ho) * Wo;
  const int chunk = chunk_size(shape_, Ho, Wo, trace.batch);
  FeatureMap dx;
  if (want_dx) {
    dx.batch = trace.batch;
    dx.height = trace.in_height;
    dx.width = trace.in_width;
    dx.data = Matrix::Zero(static_cast<Eigen::Index>(trace.batch) * trace.in_height * trace.in_width,
                           shape_.in_channels);
  }
  bias_.grad.row(0) += dy.data.colwise().sum();
  if (trace.input.size() == 0) {
    weight_.grad.noalias() += trace.cols.transpose() * dy.data;
    if (want_dx) {
      Matrix dcols(dy.data.rows(), weight_.value.rows());
      dcols.noalias() = dy.data * weight_.value.transpose();
      col2im(dcols, shape_, 0, trace.batch, dx);
    }
    return dx;
  }
  FeatureMap input;
  input.batch = trace.batch;
  input.height = trace.in_height;
  input.width = trace.in_width;
  input.data = trace.input;
  Matrix cols;
  for (int b0 = 0; b0 < trace.batch; b0 += chunk) {
    const int b1 = std::min(trace.batch, b0 + chunk);
    im2col(input, shape_, b0, b1, cols);
    const auto dblock = dy.data.middleRows(b0 * per, (b1 - b0) * per);
    weight_.grad.noalias() += cols.transpose() * dblock;
    if (want_dx) {
      Matrix dcols(dblock.rows(), weight_.value.rows());
      dcols.noalias() = dblock * weight_.value.transpose();
      col2im(dcols, shape_, b0, b1, dx);
    }
  }
  return dx;
}

void Conv2d::collect(std::vector<Param*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

// ---------------------------------------------------------------------------

FeatureMap avg_pool(const FeatureMap& x, int factor) {
  if (factor <= 1) return x;
  FeatureMap y;
  y.batch = x.batch;
  y.height = x.height / factor;
  y.width = x.width / factor;
  y.data = Matrix::Zero(static_cast<Eigen::Index>(y.batch) * y.height * y.width, x.channels());
  const double inv = 1.0 / (factor * factor);
  for (int c = 0; c < x.channels(); ++c) {
    const double* src = x.data.col(c).data();
    double* dst = y.data.col(c).data();
    for (int b = 0; b < x.batch; ++b) {
      for (int oy = 0; oy < y.height; ++oy) {
        for (int ox = 0; ox < y.width; ++ox) {
          double sum = 0.0;
          for (int dy = 0; dy < factor; ++dy) {
            const double* row = src + (static_cast<Eigen::Index>(b) * x.height + oy * factor + dy) * x.width;
            for (int dx = 0; dx < factor; ++dx) sum += row[ox * factor + dx];
          }
          dst[(static_cast<Eigen::Index>(b) * y.height + oy) * y.width + ox] = sum * inv;
        }
      }
    }
  }
  return y;
}

FeatureMap max_pool(const FeatureMap& x, int kernel, int stride, int padding, MaxPoolTrace* trace) {
  FeatureMap y;
  y.batch = x.batch;
  y.height = conv_output_size(x.height, kernel, stride, padding);
  y.width = conv_output_size(x.width, kernel, stride, padding);
  y.data.resize(static_cast<Eigen::Index>(y.batch) * y.height * y.width, x.channels());
  if (trace) {
    trace->argmax.resize(static_cast<std::size_t>(y.data.size()));
    trace->in_height = x.height;
    trace->in_width = x.width;
  }
  const Eigen::Index rows = x.data.rows();
  for (int c = 0; c < x.channels(); ++c) {
    for (int b = 0; b < x.batch; ++b) {
      for (int oy = 0; oy < y.height; ++oy) {
        for (int ox = 0; ox < y.width; ++ox) {
          double best = -std::numeric_limits<double>::infinity();
          Eigen::Index arg = -1;
          for (int ky = 0; ky < kernel; ++ky) {
            const int iy = oy * stride - padding + ky;
            if (iy < 0 || iy >= x.height) continue;
            for (int kx = 0; kx < kernel; ++kx) {
              const int ix = ox * stride - padding + kx;
              if (ix < 0 || ix >= x.width) continue;
              const Eigen::Index r = (static_cast<Eigen::Index>(b) * x.height + iy) * x.width + ix;
              if (x.data(r, c) > best) {
                best = x.data(r, c);
                arg = r + c * rows;
              }
            }
          }
          const Eigen::Index orow = (static_cast<Eigen::Index>(b) * y.height + oy) * y.width + ox;
          y.data(orow, c) = best;
          if (trace) trace->argmax[static_cast<std::size_t>(orow + c * y.data.rows())] = arg;
        }
      }
    }
  }
  return y;
}

FeatureMap max_pool_backward(const MaxPoolTrace& trace, const FeatureMap& dy, int in_channels) {
  FeatureMap dx;
  dx.batch = dy.batch;
  dx.height = trace.in_height;
  dx.width = trace.in_width;
  dx.data = Matrix::Zero(static_cast<Eigen::Index>(dx.batch) * dx.height * dx.width, in_channels);
  for (Eigen::Index i = 0; i < dy.data.size(); ++i) {
    dx.data.data()[trace.argmax[static_cast<std::size_t>(i)]] += dy.data.data()[i];
  }
  return dx;
}

Matrix global_avg_pool(const FeatureMap& x) {
  const Eigen::Index per = static_cast<Eigen::Index>(x.height) * x.width;
  Matrix y(x.channels(), x.batch);
  for (int b = 0; b < x.batch; ++b) {
    y.col(b) = x.data.middleRows(b * per, per).colwise().mean().transpose();
  }
  return y;
}

FeatureMap global_avg_pool_backward(const Matrix& dy, int batch, int height, int width) {
  const Eigen::Index per = static_cast<Eigen::Index>(height) * width;
  FeatureMap dx;
  dx.batch = batch;
  dx.height = height;
  dx.width = width;
  dx.data.resize(per * batch, dy.rows());
  for (int b = 0; b < batch; ++b) {
    dx.data.middleRows(b * per, per).rowwise() = dy.col(b).transpose() / static_cast<double>(per);
  }
  return dx;
}

// ---------------------------------------------------------------------------

BasicBlock::BasicBlock(const std::string& name, int in_channels, int out_channels, int stride)
    : conv1_(name + ".conv1", {in_channels, out_channels, 3, stride, 1}),
      conv2_(name + ".conv2", {out_channels, out_channels, 3, 1, 1}),
      project_(stride != 1 || in_channels != out_channels) {
  if (project_) shortcut_ = Conv2d(name + ".shortcut", {in_channels, out_channels, 1, stride, 0});
}

void BasicBlock::init(Rng& rng, double residual_scale) {
  conv1_.init(Init::he, rng);
  conv2_.init(Init::he, rng);
  conv2_.weight().value *= residual_scale;
  if (project_) shortcut_.init(Init::lecun, rng);
}

FeatureMap BasicBlock::forward(const FeatureMap& x, Trace* trace) const {
  FeatureMap h = conv1_.forward(x, trace ? &trace->conv1 : nullptr);
  h.data = relu(h.data);
  FeatureMap y = conv2_.forward(h, trace ? &trace->conv2 : nullptr);
  if (project_) {
    y.data += shortcut_.forward(x, trace ? &trace->shortcut : nullptr).data;
  } else {
    y.data += x.data;
  }
  y.data = relu(y.data);
  if (trace) {
    trace->hidden = h;
    trace->out = y;
  }
  return y;
}

FeatureMap BasicBlock::backward(const Trace& trace, const FeatureMap& dy, bool want_dx) {
  FeatureMap dz = dy;
  dz.data = relu_backward(trace.out.data, dy.data);
  FeatureMap dh = conv2_.backward(trace.conv2, dz, true);
  dh.data = relu_backward(trace.hidden.data, dh.data);
  FeatureMap dx = conv1_.backward(trace.conv1, dh, want_dx);
  if (project_) {
    FeatureMap ds = shortcut_.backward(trace.shortcut, dz, want_dx);
    if (want_dx) dx.data += ds.data;
  } else if (want_dx) {
    dx.data += dz.data;
  }
  return dx;
}

void BasicBlock::collect(std::vector<Param*>& out) {
  conv1_.collect(out);
  conv2_.collect(out);
  if (project_) shortcut_.collect(out);
}

// ---------------------------------------------------------------------------

Adam::Adam(std::vector<Param*> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  for (const auto* p : params_) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

void Adam::step() {
  ++step_count_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_count_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_count_));
  const double lr = options_.learning_rate;
  const double eps = options_.epsilon;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& g = params_[i]->grad;
    m_[i] = b1 * m_[i] + (1.0 - b1) * g;
    v_[i] = b2 * v_[i] + (1.0 - b2) * g.cwiseProduct(g);
    params_[i]->value.array() -=
        lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps);
  }
}

}  // namespace dryfuse::nn
