#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dryfuse/image.hpp"
#include "dryfuse/nn.hpp"

namespace dryfuse {

using nn::Matrix;
using nn::RowVector;
using nn::Vector;

enum class EncoderPreset { resnet18, tiny };

const char* to_string(EncoderPreset preset);
EncoderPreset parse_encoder_preset(const std::string& name);

// Residual CNN topology: optional fixed input average-pool, stem convolution,
// optional 3x3/2 max-pool, then stages of basic blocks (the first block of
// every stage after the first downsamples by 2), global average pool and a
// linear projection to the embedding.
struct EncoderSpec {
  int input_pool = 1;
  int stem_kernel = 7;
  int stem_stride = 2;
  int stem_channels = 64;
  bool stem_maxpool = true;
  std::vector<int> stage_widths{64, 128, 256, 512};
  int blocks_per_stage = 2;

  static EncoderSpec preset(EncoderPreset preset);
};

struct Ratio {
  int tabular = 8;
  int image = 1;

  bool operator==(const Ratio&) const = default;
  std::string label() const { return std::to_string(tabular) + ":" + std::to_string(image); }
};

struct FusionConfig {
  int tabular_hidden = 1024;
  int embedding_dim = 512;
  int fused_dim = 1024;
  // Hidden width of the layer after the fused vector; 0 maps the rectified
  // fused vector straight to the scalar output.
  int head_hidden = 0;
  Ratio ratio{8, 1};
  EncoderPreset encoder_preset = EncoderPreset::tiny;
  std::uint64_t seed = 0;

  void check() const;
};

struct RatioAllocation {
  int tabular_dims = 0;
  int image_dims = 0;
};

// tabular = floor(fused * rt / (rt + ri)) clamped to [1, fused - 1].
RatioAllocation allocate_ratio(Ratio ratio, int fused_dim);

struct EmbeddingPair {
  Vector tabular_embedding;
  Vector image_embedding;
};

// ---------------------------------------------------------------------------
// Building blocks

// in -> hidden -> embedding with a rectifier in between.
class MlpEncoder {
 public:
  MlpEncoder() = default;
  MlpEncoder(const std::string& name, int in, int hidden, int out);

  void init(Rng& rng);
  struct Trace {
    Matrix input;
    Matrix hidden;
  };
  Matrix forward(const Matrix& x, Trace* trace) const;
  void backward(const Trace& trace, const Matrix& dy);
  void collect(std::vector<nn::Param*>& out);
  int in() const { return fc1_.in(); }
  int out() const { return fc2_.out(); }

 private:
  nn::Linear fc1_;
  nn::Linear fc2_;
};

class ImageEncoder {
 public:
  ImageEncoder() = default;
  ImageEncoder(const std::string& name, EncoderSpec spec, int embedding_dim);

  void init(Rng& rng);

  // Applies the fixed input pooling to a 3x224x224 channel-major tensor.
  Matrix prepare(const std::vector<double>& tensor) const;
  int prepared_size() const { return kTensorSize / spec_.input_pool; }

  struct Trace {
    nn::Conv2d::Trace stem;
    nn::FeatureMap stem_out;
    nn::MaxPoolTrace pool;
    std::vector<nn::BasicBlock::Trace> blocks;
    int last_height = 0;
    int last_width = 0;
    Matrix pooled;  // channels x batch
  };

  // `images` holds prepared inputs; returns embedding_dim x batch.
  Matrix forward(const nn::FeatureMap& images, Trace* trace) const;
  void backward(const Trace& trace, const Matrix& d_embedding);
  void collect(std::vector<nn::Param*>& out);
  nn::Linear& projection() { return proj_; }
  const EncoderSpec& spec() const { return spec_; }

 private:
  EncoderSpec spec_;
  nn::Conv2d stem_;
  std::vector<nn::BasicBlock> blocks_;
  nn::Linear proj_;
};

// Ratio-allocated projections of both embeddings, concatenation into the
// fused vector, rectifier, optional hidden layer and a sigmoid scalar output.
class FusionHead {
 public:
  FusionHead() = default;
  FusionHead(const std::string& name, int embedding_dim, int fused_dim, RatioAllocation alloc,
             int head_hidden);

  void init(Rng& rng);
  struct Trace {
    Matrix tabular, image;
    Matrix fused;   // rectified concatenation
    Matrix hidden;  // rectified hidden layer (head_hidden > 0)
    RowVector out;
  };
  RowVector forward(const Matrix& tabular_embedding, const Matrix& image_embedding, Trace* trace) const;
  // Returns the gradients w.r.t. both embeddings.
  std::pair<Matrix, Matrix> backward(const Trace& trace, const RowVector& d_out);
  void collect(std::vector<nn::Param*>& out);
  nn::Param& output_bias() { return out_.bias(); }

  const RatioAllocation& allocation() const { return alloc_; }
  nn::Linear& tabular_projection() { return tab_proj_; }
  nn::Linear& image_projection() { return img_proj_; }
  int fused_dim() const { return alloc_.tabular_dims + alloc_.image_dims; }

 private:
  RatioAllocation alloc_;
  nn::Linear tab_proj_;
  nn::Linear img_proj_;
  int head_hidden_ = 0;
  nn::Linear hidden_;
  nn::Linear out_;
};

// ---------------------------------------------------------------------------
// Trainable regressors

struct Batch {
  Matrix tabular;          // design columns x batch
  Matrix features;         // secondary feature branch x batch
  nn::FeatureMap images;   // prepared image inputs
  Eigen::Index size() const;
};

enum class ModelKind { fusion, image_only, mlp, simplified_parallel };

const char* to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

class Regressor {
 public:
  virtual ~Regressor() = default;
  virtual ModelKind kind() const = 0;
  virtual bool uses_images() const { return false; }
  // Inference without keeping activations; safe to call concurrently.
  virtual RowVector predict(const Batch& batch) const = 0;
  // Forward pass that records activations for the next backward().
  virtual RowVector forward_train(const Batch& batch) = 0;
  // Accumulates dL/dtheta given dL/dprediction.
  virtual void backward(const RowVector& d_prediction) = 0;
  virtual std::vector<nn::Param*> params() = 0;
  virtual const ImageEncoder* image_encoder() const { return nullptr; }
  // Bias of the unit feeding the sigmoid.
  virtual nn::Param& output_bias() = 0;
};

// Multi-modal fusion: tabular MLP encoder + residual CNN image encoder + head.
class FusionModel final : public Regressor {
 public:
  explicit FusionModel(const FusionConfig& config, int tabular_dim = 3);

  ModelKind kind() const override { return ModelKind::fusion; }
  bool uses_images() const override { return true; }
  RowVector predict(const Batch& batch) const override;
  RowVector forward_train(const Batch& batch) override;
  void backward(const RowVector& d_prediction) override;
  std::vector<nn::Param*> params() override;
  nn::Param& output_bias() override;
  const ImageEncoder* image_encoder() const override { return &image_; }

  Vector encode_tabular(const Vector& x) const;
  Vector encode_image(const SliceImage& tensor) const;
  double fuse_predict(const EmbeddingPair& pair) const;
  // Rectified concatenation for one sample.
  Vector fused_vector(const EmbeddingPair& pair) const;

  MlpEncoder& tabular() { return tabular_; }
  ImageEncoder& image() { return image_; }
  FusionHead& head() { return head_; }
  const FusionConfig& config() const { return config_; }

 private:
  RowVector run(const Batch& batch, bool keep);

  FusionConfig config_;
  MlpEncoder tabular_;
  ImageEncoder image_;
  FusionHead head_;
  struct {
    MlpEncoder::Trace tabular;
    ImageEncoder::Trace image;
    FusionHead::Trace head;
  } trace_;
};

// CNN encoder + hidden layer + sigmoid output; image-only ablation arm.
class ImageOnlyModel final : public Regressor {
 public:
  explicit ImageOnlyModel(const FusionConfig& config);

  ModelKind kind() const override { return ModelKind::image_only; }
  bool uses_images() const override { return true; }
  RowVector predict(const Batch& batch) const override;
  RowVector forward_train(const Batch& batch) override;
  void backward(const RowVector& d_prediction) override;
  std::vector<nn::Param*> params() override;
  nn::Param& output_bias() override;
  const ImageEncoder* image_encoder() const override { return &image_; }

 private:
  FusionConfig config_;
  ImageEncoder image_;
  nn::Linear hidden_;
  nn::Linear out_;
  struct {
    ImageEncoder::Trace image;
    Matrix embedding, hidden;
    RowVector out;
  } trace_;
};

// in -> hidden -> 1 fully connected regressor (tabular-only arm and the NN
// baselines).
class MlpModel final : public Regressor {
 public:
  MlpModel(int in_dim, int hidden, std::uint64_t seed);

  ModelKind kind() const override { return ModelKind::mlp; }
  RowVector predict(const Batch& batch) const override;
  RowVector forward_train(const Batch& batch) override;
  void backward(const RowVector& d_prediction) override;
  std::vector<nn::Param*> params() override;
  nn::Param& output_bias() override;
  int in_dim() const { return fc1_.in(); }

 private:
  nn::Linear fc1_;
  nn::Linear fc2_;
  struct {
    Matrix input, hidden;
    RowVector out;
  } trace_;
};

// Tabular (1x3) and simplified image-feature (1x2) branches, each encoded to
// the embedding dimension, joined by the ratio-allocated fusion head.
class SimplifiedParallelModel final : public Regressor {
 public:
  SimplifiedParallelModel(const FusionConfig& config, int tabular_dim = 3, int feature_dim = 2);

  ModelKind kind() const override { return ModelKind::simplified_parallel; }
  RowVector predict(const Batch& batch) const override;
  RowVector forward_train(const Batch& batch) override;
  void backward(const RowVector& d_prediction) override;
  std::vector<nn::Param*> params() override;
  nn::Param& output_bias() override;

  MlpEncoder& features() { return features_; }
  FusionHead& head() { return head_; }

 private:
  FusionConfig config_;
  MlpEncoder tabular_;
  MlpEncoder features_;
  FusionHead head_;
  struct {
    MlpEncoder::Trace tabular, features;
    FusionHead::Trace head;
  } trace_;
};

// Copies of all parameter values, in params() order.
std::vector<Matrix> snapshot(const std::vector<nn::Param*>& params);
void restore(const std::vector<nn::Param*>& params, const std::vector<Matrix>& values);

}  // namespace dryfuse
