#include "dryfuse/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dryfuse/domain.hpp"

namespace dryfuse {

void TrainingConfig::check() const {
  if (batch_size < 1) throw DomainError("training: batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw DomainError("training: learning_rate must be > 0");
  if (epochs < 1) throw DomainError("training: epochs must be >= 1");
  if (optimizer != "adam") throw DomainError("training: only the adam optimizer is supported");
  if (metric != "rmse") throw DomainError("training: only the rmse metric is supported");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0)) {
    throw DomainError("training: invalid Adam moments");
  }
}

Batch assemble_batch(const TrainingData& data, std::span<const Eigen::Index> indices) {
  Batch b;
  const auto n = static_cast<Eigen::Index>(indices.size());
  if (data.tabular.cols() > 0) {
    b.tabular.resize(data.tabular.rows(), n);
    for (Eigen::Index i = 0; i < n; ++i) b.tabular.col(i) = data.tabular.col(indices[i]);
  }
  if (data.features.cols() > 0) {
    b.features.resize(data.features.rows(), n);
    for (Eigen::Index i = 0; i < n; ++i) b.features.col(i) = data.features.col(indices[i]);
  }
  if (!data.images.empty()) {
    const Eigen::Index per = static_cast<Eigen::Index>(data.image_size) * data.image_size;
    b.images.batch = static_cast<int>(n);
    b.images.height = data.image_size;
    b.images.width = data.image_size;
    b.images.data.resize(per * n, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
      b.images.data.middleRows(i * per, per) = *data.images[static_cast<std::size_t>(indices[i])];
    }
  }
  return b;
}

TrainingHistory train(Regressor& model, const TrainingData& data, const TrainingConfig& config) {
  config.check();
  const Eigen::Index n = data.size();
  if (n == 0) throw std::invalid_argument("train: empty training set");
  if (model.uses_images() && static_cast<Eigen::Index>(data.images.size()) != n) {
    throw std::invalid_argument("train: model needs one image per sample");
  }
  // Start the output at the mean target; a saturated sigmoid early on pushes
  // the wide rectified layers into a dead state.
  {
    const double m = std::clamp(data.targets.mean(), 1e-3, 1.0 - 1e-3);
    model.output_bias().value.setConstant(std::log(m / (1.0 - m)));
  }
  auto params = model.params();
  nn::Adam optimizer(params, {config.learning_rate, config.beta1, config.beta2, config.epsilon});
  Rng rng = make_substream(config.seed, 0x7a11);

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  auto last_good = snapshot(params);

  TrainingHistory history;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sse = 0.0;
    for (Eigen::Index start = 0; start < n; start += config.batch_size) {
      const Eigen::Index count = std::min<Eigen::Index>(config.batch_size, n - start);
      std::span<const Eigen::Index> idx(order.data() + start, static_cast<std::size_t>(count));
      const Batch batch = assemble_batch(data, idx);
      RowVector target(count);
      for (Eigen::Index i = 0; i < count; ++i) target(i) = data.targets(idx[i]);

      optimizer.zero_grad();
      const RowVector pred = model.forward_train(batch);
      const RowVector err = pred - target;
      sse += err.squaredNorm();
      model.backward(err * (2.0 / static_cast<double>(count)));
      optimizer.step();
    }
    const double loss = sse / static_cast<double>(n);
    bool finite = std::isfinite(loss);
    for (const auto* p : params) finite = finite && p->value.allFinite();
    if (!finite) {
      restore(params, last_good);
      throw TrainingDiverged("non-finite training loss at epoch " + std::to_string(epoch + 1) +
                                 " (last finite loss " +
                                 (history.epoch_loss.empty() ? std::string("n/a")
                                                             : std::to_string(history.epoch_loss.back())) +
                                 ")",
                             epoch + 1);
    }
    history.epoch_loss.push_back(loss);
    last_good = snapshot(params);
  }
  return history;
}

std::vector<double> predict_each(const Regressor& model, const TrainingData& data) {
  std::vector<double> out(static_cast<std::size_t>(data.size()));
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const Eigen::Index idx[1] = {i};
    out[static_cast<std::size_t>(i)] = model.predict(assemble_batch(data, idx))(0);
  }
  return out;
}

}  // namespace dryfuse
