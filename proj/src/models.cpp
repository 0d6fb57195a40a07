#include "dryfuse/models.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dryfuse/domain.hpp"

namespace dryfuse {

const char* to_string(EncoderPreset preset) {
  return preset == EncoderPreset::resnet18 ? "resnet18" : "tiny";
}

EncoderPreset parse_encoder_preset(const std::string& name) {
  if (name == "resnet18") return EncoderPreset::resnet18;
  if (name == "tiny") return EncoderPreset::tiny;
  throw std::invalid_argument("unknown encoder preset '" + name + "'");
}

EncoderSpec EncoderSpec::preset(EncoderPreset preset) {
  if (preset == EncoderPreset::resnet18) return EncoderSpec{};
  EncoderSpec s;
  s.input_pool = 4;
  s.stem_kernel = 3;
  s.stem_stride = 2;
  s.stem_channels = 8;
  s.stem_maxpool = false;
  s.stage_widths = {8, 16};
  s.blocks_per_stage = 1;
  return s;
}

void FusionConfig::check() const {
  if (fused_dim < 2) throw DomainError("fusion: fused_dim must be >= 2");
  if (embedding_dim <= 0) throw DomainError("fusion: embedding_dim must be > 0");
  if (tabular_hidden <= 0) throw DomainError("fusion: tabular_hidden must be > 0");
  if (head_hidden < 0) throw DomainError("fusion: head_hidden must be >= 0");
  if (ratio.tabular < 1 || ratio.image < 1) throw DomainError("fusion: ratio parts must be >= 1");
}

RatioAllocation allocate_ratio(Ratio ratio, int fused_dim) {
  if (ratio.tabular < 1 || ratio.image < 1) throw DomainError("ratio parts must be positive");
  if (fused_dim < 2) throw DomainError("fused_dim must be >= 2");
  const long long num = static_cast<long long>(fused_dim) * ratio.tabular;
  const long long den = static_cast<long long>(ratio.tabular) + ratio.image;
  const int tab = static_cast<int>(std::clamp<long long>(num / den, 1, fused_dim - 1));
  return {tab, fused_dim - tab};
}

// ---------------------------------------------------------------------------

MlpEncoder::MlpEncoder(const std::string& name, int in, int hidden, int out)
    : fc1_(name + ".fc1", in, hidden), fc2_(name + ".fc2", hidden, out) {}

void MlpEncoder::init(Rng& rng) {
  fc1_.init(nn::Init::he, rng);
  fc2_.init(nn::Init::lecun, rng);
}

Matrix MlpEncoder::forward(const Matrix& x, Trace* trace) const {
  Matrix h = nn::relu(fc1_.forward(x));
  Matrix y = fc2_.forward(h);
  if (trace) {
    trace->input = x;
    trace->hidden = std::move(h);
  }
  return y;
}

void MlpEncoder::backward(const Trace& trace, const Matrix& dy) {
  Matrix dh = nn::relu_backward(trace.hidden, fc2_.backward(trace.hidden, dy));
  fc1_.backward(trace.input, dh, false);
}

void MlpEncoder::collect(std::vector<nn::Param*>& out) {
  fc1_.collect(out);
  fc2_.collect(out);
}

// ---------------------------------------------------------------------------

ImageEncoder::ImageEncoder(const std::string& name, EncoderSpec spec, int embedding_dim)
    : spec_(std::move(spec)) {
  if (spec_.input_pool < 1 || kTensorSize % spec_.input_pool != 0) {
    throw std::invalid_argument("encoder input_pool must divide 224");
  }
  if (spec_.stage_widths.empty() || spec_.blocks_per_stage < 1) {
    throw std::invalid_argument("encoder needs at least one stage with one block");
  }
  stem_ = nn::Conv2d(name + ".stem", {3, spec_.stem_channels, spec_.stem_kernel, spec_.stem_stride,
                                      spec_.stem_kernel / 2});
  int in = spec_.stem_channels;
  for (std::size_t s = 0; s < spec_.stage_widths.size(); ++s) {
    for (int j = 0; j < spec_.blocks_per_stage; ++j) {
      const int stride = (s > 0 && j == 0) ? 2 : 1;
      blocks_.emplace_back(name + ".stage" + std::to_string(s) + ".block" + std::to_string(j), in,
                           spec_.stage_widths[s], stride);
      in = spec_.stage_widths[s];
    }
  }
  proj_ = nn::Linear(name + ".proj", in, embedding_dim);
}

void ImageEncoder::init(Rng& rng) {
  stem_.init(nn::Init::he, rng);
  const double residual_scale = 1.0 / std::sqrt(static_cast<double>(blocks_.size()));
  for (auto& b : blocks_) b.init(rng, residual_scale);
  proj_.init(nn::Init::lecun, rng);
}

Matrix ImageEncoder::prepare(const std::vector<double>& tensor) const {
  constexpr Eigen::Index plane = static_cast<Eigen::Index>(kTensorSize) * kTensorSize;
  if (tensor.size() != static_cast<std::size_t>(3 * plane)) {
    throw std::invalid_argument("image encoder expects a 224x224x3 tensor");
  }
  nn::FeatureMap x;
  x.batch = 1;
  x.height = kTensorSize;
  x.width = kTensorSize;
  x.data = Eigen::Map<const Matrix>(tensor.data(), plane, 3);
  return nn::avg_pool(x, spec_.input_pool).data;
}

Matrix ImageEncoder::forward(const nn::FeatureMap& images, Trace* trace) const {
  const int expected = prepared_size();
  if (images.height != expected || images.width != expected || images.channels() != 3) {
    throw std::invalid_argument("image encoder expects prepared inputs of " +
                                std::to_string(expected) + "x" + std::to_string(expected) + "x3");
  }
  nn::FeatureMap x = stem_.forward(images, trace ? &trace->stem : nullptr);
  x.data = nn::relu(x.data);
  if (trace) trace->stem_out = x;
  if (spec_.stem_maxpool) x = nn::max_pool(x, 3, 2, 1, trace ? &trace->pool : nullptr);
  if (trace) trace->blocks.resize(blocks_.size());
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    x = blocks_[i].forward(x, trace ? &trace->blocks[i] : nullptr);
  }
  Matrix pooled = nn::global_avg_pool(x);
  Matrix y = proj_.forward(pooled);
  if (trace) {
    trace->last_height = x.height;
    trace->last_width = x.width;
    trace->pooled = std::move(pooled);
  }
  return y;
}

void ImageEncoder::backward(const Trace& trace, const Matrix& d_embedding) {
  const Matrix d_pooled = proj_.backward(trace.pooled, d_embedding);
  const int batch = static_cast<int>(d_embedding.cols());
  nn::FeatureMap dx = nn::global_avg_pool_backward(d_pooled, batch, trace.last_height, trace.last_width);
  for (std::size_t i = blocks_.size(); i-- > 0;) dx = blocks_[i].backward(trace.blocks[i], dx, true);
  if (spec_.stem_maxpool) dx = nn::max_pool_backward(trace.pool, dx, spec_.stem_channels);
  dx.data = nn::relu_backward(trace.stem_out.data, dx.data);
  stem_.backward(trace.stem, dx, false);
}

void ImageEncoder::collect(std::vector<nn::Param*>& out) {
  stem_.collect(out);
  for (auto& b : blocks_) b.collect(out);
  proj_.collect(out);
}

// ---------------------------------------------------------------------------

FusionHead::FusionHead(const std::string& name, int embedding_dim, int fused_dim,
                       RatioAllocation alloc, int head_hidden)
    : alloc_(alloc),
      tab_proj_(name + ".tabular_proj", embedding_dim, alloc.tabular_dims),
      img_proj_(name + ".image_proj", embedding_dim, alloc.image_dims),
      head_hidden_(head_hidden) {
  if (alloc.tabular_dims + alloc.image_dims != fused_dim || alloc.tabular_dims < 1 ||
      alloc.image_dims < 1) {
    throw std::invalid_argument("ratio allocation does not match the fused dimension");
  }
  if (head_hidden_ > 0) hidden_ = nn::Linear(name + ".hidden", fused_dim, head_hidden_);
  out_ = nn::Linear(name + ".out", head_hidden_ > 0 ? head_hidden_ : fused_dim, 1);
}

void FusionHead::init(Rng& rng) {
  tab_proj_.init(nn::Init::lecun, rng);
  img_proj_.init(nn::Init::lecun, rng);
  if (head_hidden_ > 0) hidden_.init(nn::Init::he, rng);
  out_.init(nn::Init::lecun, rng);
}

RowVector FusionHead::forward(const Matrix& tabular_embedding, const Matrix& image_embedding,
                              Trace* trace) const {
  if (tabular_embedding.cols() != image_embedding.cols()) {
    throw std::invalid_argument("fusion head: batch sizes differ");
  }
  Matrix fused(fused_dim(), tabular_embedding.cols());
  fused.topRows(alloc_.tabular_dims) = tab_proj_.forward(tabular_embedding);
  fused.bottomRows(alloc_.image_dims) = img_proj_.forward(image_embedding);
  fused = nn::relu(fused);
  Matrix hidden;
  if (head_hidden_ > 0) hidden = nn::relu(hidden_.forward(fused));
  RowVector out = nn::sigmoid(out_.forward(head_hidden_ > 0 ? hidden : fused));
  if (trace) {
    trace->tabular = tabular_embedding;
    trace->image = image_embedding;
    trace->fused = std::move(fused);
    trace->hidden = std::move(hidden);
    trace->out = out;
  }
  return out;
}

std::pair<Matrix, Matrix> FusionHead::backward(const Trace& trace, const RowVector& d_out) {
  const RowVector dz = d_out.array() * trace.out.array() * (1.0 - trace.out.array());
  Matrix d_fused;
  if (head_hidden_ > 0) {
    Matrix dh = nn::relu_backward(trace.hidden, out_.backward(trace.hidden, dz));
    d_fused = hidden_.backward(trace.fused, dh);
  } else {
    d_fused = out_.backward(trace.fused, dz);
  }
  d_fused = nn::relu_backward(trace.fused, d_fused);
  Matrix dt = tab_proj_.backward(trace.tabular, d_fused.topRows(alloc_.tabular_dims));
  Matrix di = img_proj_.backward(trace.image, d_fused.bottomRows(alloc_.image_dims));
  return {std::move(dt), std::move(di)};
}

void FusionHead::collect(std::vector<nn::Param*>& out) {
  tab_proj_.collect(out);
  img_proj_.collect(out);
  if (head_hidden_ > 0) hidden_.collect(out);
  out_.collect(out);
}

// ---------------------------------------------------------------------------

Eigen::Index Batch::size() const {
  if (tabular.cols() > 0) return tabular.cols();
  if (features.cols() > 0) return features.cols();
  return images.batch;
}

const char* to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::fusion: return "fusion";
    case ModelKind::image_only: return "image_only";
    case ModelKind::mlp: return "mlp";
    case ModelKind::simplified_parallel: return "simplified_parallel";
  }
  return "unknown";
}

ModelKind parse_model_kind(const std::string& name) {
  for (auto k : {ModelKind::fusion, ModelKind::image_only, ModelKind::mlp,
                 ModelKind::simplified_parallel}) {
    if (name == to_string(k)) return k;
  }
  throw std::invalid_argument("unknown model kind '" + name + "'");
}

// ---------------------------------------------------------------------------

FusionModel::FusionModel(const FusionConfig& config, int tabular_dim)
    : config_(config),
      tabular_("tabular", tabular_dim, config.tabular_hidden, config.embedding_dim),
      image_("image", EncoderSpec::preset(config.encoder_preset), config.embedding_dim),
      head_("head", config.embedding_dim, config.fused_dim,
            allocate_ratio(config.ratio, config.fused_dim), config.head_hidden) {
  config_.check();
  Rng rng = make_substream(config.seed, 0);
  tabular_.init(rng);
  image_.init(rng);
  head_.init(rng);
}

RowVector FusionModel::predict(const Batch& batch) const {
  const Matrix t = tabular_.forward(batch.tabular, nullptr);
  const Matrix i = image_.forward(batch.images, nullptr);
  return head_.forward(t, i, nullptr);
}

RowVector FusionModel::forward_train(const Batch& batch) {
  const Matrix t = tabular_.forward(batch.tabular, &trace_.tabular);
  const Matrix i = image_.forward(batch.images, &trace_.image);
  return head_.forward(t, i, &trace_.head);
}

void FusionModel::backward(const RowVector& d_prediction) {
  auto [dt, di] = head_.backward(trace_.head, d_prediction);
  tabular_.backward(trace_.tabular, dt);
  image_.backward(trace_.image, di);
}

std::vector<nn::Param*> FusionModel::params() {
  std::vector<nn::Param*> out;
  tabular_.collect(out);
  image_.collect(out);
  head_.collect(out);
  return out;
}

nn::Param& FusionModel::output_bias() { return head_.output_bias(); }

Vector FusionModel::encode_tabular(const Vector& x) const {
  return tabular_.forward(Matrix(x), nullptr).col(0);
}

Vector FusionModel::encode_image(const SliceImage& tensor) const {
  if (tensor.stage != Stage::tensor) throw InvalidImage("encode_image expects a tensor-stage image");
  tensor.check();
  nn::FeatureMap x;
  x.batch = 1;
  x.height = image_.prepared_size();
  x.width = image_.prepared_size();
  x.data = image_.prepare(tensor.tensor);
  return image_.forward(x, nullptr).col(0);
}

double FusionModel::fuse_predict(const EmbeddingPair& pair) const {
  return head_.forward(Matrix(pair.tabular_embedding), Matrix(pair.image_embedding), nullptr)(0);
}

Vector FusionModel::fused_vector(const EmbeddingPair& pair) const {
  FusionHead::Trace t;
  head_.forward(Matrix(pair.tabular_embedding), Matrix(pair.image_embedding), &t);
  return t.fused.col(0);
}

// ---------------------------------------------------------------------------

ImageOnlyModel::ImageOnlyModel(const FusionConfig& config)
    : config_(config),
      image_("image", EncoderSpec::preset(config.encoder_preset), config.embedding_dim),
      hidden_("head.hidden", config.embedding_dim, config.fused_dim),
      out_("head.out", config.fused_dim, 1) {
  config_.check();
  Rng rng = make_substream(config.seed, 0);
  image_.init(rng);
  hidden_.init(nn::Init::he, rng);
  out_.init(nn::Init::lecun, rng);
}

RowVector ImageOnlyModel::predict(const Batch& batch) const {
  const Matrix e = image_.forward(batch.images, nullptr);
  return nn::sigmoid(out_.forward(nn::relu(hidden_.forward(e))));
}

RowVector ImageOnlyModel::forward_train(const Batch& batch) {
  trace_.embedding = image_.forward(batch.images, &trace_.image);
  trace_.hidden = nn::relu(hidden_.forward(trace_.embedding));
  trace_.out = nn::sigmoid(out_.forward(trace_.hidden));
  return trace_.out;
}

void ImageOnlyModel::backward(const RowVector& d_prediction) {
  const RowVector dz = d_prediction.array() * trace_.out.array() * (1.0 - trace_.out.array());
  Matrix dh = nn::relu_backward(trace_.hidden, out_.backward(trace_.hidden, dz));
  image_.backward(trace_.image, hidden_.backward(trace_.embedding, dh));
}

std::vector<nn::Param*> ImageOnlyModel::params() {
  std::vector<nn::Param*> out;
  image_.collect(out);
  hidden_.collect(out);
  out_.collect(out);
  return out;
}

nn::Param& ImageOnlyModel::output_bias() { return out_.bias(); }

// ---------------------------------------------------------------------------

MlpModel::MlpModel(int in_dim, int hidden, std::uint64_t seed)
    : fc1_("mlp.fc1", in_dim, hidden), fc2_("mlp.fc2", hidden, 1) {
  Rng rng = make_substream(seed, 0);
  fc1_.init(nn::Init::he, rng);
  fc2_.init(nn::Init::lecun, rng);
}

RowVector MlpModel::predict(const Batch& batch) const {
  return nn::sigmoid(fc2_.forward(nn::relu(fc1_.forward(batch.tabular))));
}

RowVector MlpModel::forward_train(const Batch& batch) {
  trace_.input = batch.tabular;
  trace_.hidden = nn::relu(fc1_.forward(batch.tabular));
  trace_.out = nn::sigmoid(fc2_.forward(trace_.hidden));
  return trace_.out;
}

void MlpModel::backward(const RowVector& d_prediction) {
  const RowVector dz = d_prediction.array() * trace_.out.array() * (1.0 - trace_.out.array());
  Matrix dh = nn::relu_backward(trace_.hidden, fc2_.backward(trace_.hidden, dz));
  fc1_.backward(trace_.input, dh, false);
}

std::vector<nn::Param*> MlpModel::params() {
  std::vector<nn::Param*> out;
  fc1_.collect(out);
  fc2_.collect(out);
  return out;
}

nn::Param& MlpModel::output_bias() { return fc2_.bias(); }

// ---------------------------------------------------------------------------

SimplifiedParallelModel::SimplifiedParallelModel(const FusionConfig& config, int tabular_dim,
                                                 int feature_dim)
    : config_(config),
      tabular_("tabular", tabular_dim, config.tabular_hidden, config.embedding_dim),
      features_("features", feature_dim, config.tabular_hidden, config.embedding_dim),
      head_("head", config.embedding_dim, config.fused_dim,
            allocate_ratio(config.ratio, config.fused_dim), config.head_hidden) {
  config_.check();
  Rng rng = make_substream(config.seed, 0);
  tabular_.init(rng);
  features_.init(rng);
  head_.init(rng);
}

RowVector SimplifiedParallelModel::predict(const Batch& batch) const {
  return head_.forward(tabular_.forward(batch.tabular, nullptr),
                       features_.forward(batch.features, nullptr), nullptr);
}

RowVector SimplifiedParallelModel::forward_train(const Batch& batch) {
  const Matrix t = tabular_.forward(batch.tabular, &trace_.tabular);
  const Matrix f = features_.forward(batch.features, &trace_.features);
  return head_.forward(t, f, &trace_.head);
}

void SimplifiedParallelModel::backward(const RowVector& d_prediction) {
  auto [dt, df] = head_.backward(trace_.head, d_prediction);
  tabular_.backward(trace_.tabular, dt);
  features_.backward(trace_.features, df);
}

std::vector<nn::Param*> SimplifiedParallelModel::params() {
  std::vector<nn::Param*> out;
  tabular_.collect(out);
  features_.collect(out);
  head_.collect(out);
  return out;
}

nn::Param& SimplifiedParallelModel::output_bias() { return head_.output_bias(); }

// ---------------------------------------------------------------------------

std::vector<Matrix> snapshot(const std::vector<nn::Param*>& params) {
  std::vector<Matrix> out;
  out.reserve(params.size());
  for (const auto* p : params) out.push_back(p->value);
  return out;
}

void restore(const std::vector<nn::Param*>& params, const std::vector<Matrix>& values) {
  if (params.size() != values.size()) throw std::invalid_argument("parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->value.rows() != values[i].rows() || params[i]->value.cols() != values[i].cols()) {
      throw std::invalid_argument("parameter shape mismatch for " + params[i]->name);
    }
    params[i]->value = values[i];
  }
}

}  // namespace dryfuse
