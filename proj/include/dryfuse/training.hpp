#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dryfuse/models.hpp"

namespace dryfuse {

struct TrainingConfig {
  int batch_size = 64;
  double learning_rate = 1e-4;
  int epochs = 300;
  std::string optimizer = "adam";
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::string metric = "rmse";
  std::uint64_t seed = 0;

  void check() const;
};

// Column-batched training inputs for one split. `images` points at prepared
// encoder inputs owned elsewhere (one per sample).
struct TrainingData {
  Matrix tabular;   // d x n
  Matrix features;  // k x n
  std::vector<const Matrix*> images;
  int image_size = 0;
  RowVector targets;

  Eigen::Index size() const { return targets.size(); }
};

Batch assemble_batch(const TrainingData& data, std::span<const Eigen::Index> indices);

struct TrainingHistory {
  std::vector<double> epoch_loss;  // mean squared error over each epoch
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& message, int epoch)
      : std::runtime_error(message), epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

// Mini-batch Adam on mean squared error. Deterministic in config.seed. On a
// non-finite loss the parameters of the last finite epoch are restored and
// TrainingDiverged is thrown.
TrainingHistory train(Regressor& model, const TrainingData& data, const TrainingConfig& config);

// Predicts every sample one at a time so a sample's prediction never depends
// on its batch neighbours.
std::vector<double> predict_each(const Regressor& model, const TrainingData& data);

}  // namespace dryfuse
