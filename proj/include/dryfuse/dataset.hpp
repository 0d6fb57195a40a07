#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dryfuse/domain.hpp"
#include "dryfuse/imaging.hpp"
#include "dryfuse/models.hpp"
#include "dryfuse/simulator.hpp"

namespace dryfuse {

struct PreprocessConfig {
  CalibrationParams calibration;
  ThresholdSegmenterParams segmenter;
};

struct PreparedSample {
  SliceImage masked;  // calibrated, single-slice mask attached
  SliceImage tensor;  // 224x224x3 model input
  SimpleImageFeatures features;
};

// raw -> calibrated -> masked -> tensor, plus simple features.
PreparedSample preprocess_image(const SliceImage& raw, const PreprocessConfig& config);

// Records with everything the experiment arms consume. Image inputs are kept
// already pooled for the encoder (`image_size` x `image_size` x 3).
struct PreparedDataset {
  std::vector<DryingRecord> records;
  std::vector<SimpleImageFeatures> features;
  std::vector<Matrix> images;
  int image_size = 0;
  std::string dataset_hash;

  std::size_t size() const { return records.size(); }
};

// Loads each record's image relative to `root` (absolute paths are used as is).
PreparedDataset prepare_dataset(const std::vector<DryingRecord>& records,
                                const std::filesystem::path& root, const PreprocessConfig& config,
                                EncoderPreset preset);

// Same pipeline on an in-memory simulated dataset.
PreparedDataset prepare_dataset(const SimulatedDataset& dataset, const PreprocessConfig& config,
                                EncoderPreset preset);

}  // namespace dryfuse
