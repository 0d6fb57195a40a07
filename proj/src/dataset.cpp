#include "dryfuse/dataset.hpp"

#include <stdexcept>

namespace dryfuse {

PreparedSample preprocess_image(const SliceImage& raw, const PreprocessConfig& config) {
  const SliceImage calibrated =
      calibrate_color(raw, config.calibration.source_cct, config.calibration.target_cct);
  const ThresholdSegmenter segmenter(config.segmenter);
  auto masked = segment_slices(calibrated, segmenter, 1);
  PreparedSample out;
  out.masked = std::move(masked.front());
  out.masked.sample_id = raw.sample_id;
  out.tensor = to_model_tensor(out.masked);
  out.features = extract_simple_features(out.masked);
  return out;
}

namespace {

Matrix pool_tensor(const SliceImage& tensor, const EncoderSpec& spec) {
  nn::FeatureMap x;
  x.batch = 1;
  x.height = kTensorSize;
  x.width = kTensorSize;
  x.data = Eigen::Map<const Matrix>(tensor.tensor.data(),
                                    static_cast<Eigen::Index>(kTensorSize) * kTensorSize, 3);
  return spec.input_pool > 1 ? nn::avg_pool(x, spec.input_pool).data : x.data;
}

void add_sample(PreparedDataset& out, const DryingRecord& record, const SliceImage& raw,
                const PreprocessConfig& config, const EncoderSpec& spec) {
  PreparedSample s;
  try {
    s = preprocess_image(raw, config);
  } catch (const std::exception& e) {
    throw std::runtime_error("preprocessing " + record.sample.sample_id + ": " + e.what());
  }
  out.records.push_back(record);
  out.features.push_back(s.features);
  out.images.push_back(pool_tensor(s.tensor, spec));
}

}  // namespace

PreparedDataset prepare_dataset(const std::vector<DryingRecord>& records,
                                const std::filesystem::path& root, const PreprocessConfig& config,
                                EncoderPreset preset) {
  const EncoderSpec spec = EncoderSpec::preset(preset);
  PreparedDataset out;
  out.image_size = kTensorSize / spec.input_pool;
  for (const auto& r : records) {
    std::filesystem::path p(r.image_path);
    if (p.is_relative()) p = root / p;
    SliceImage raw;
    raw.stage = Stage::raw;
    raw.sample_id = r.sample.sample_id;
    raw.rgb = read_png(p);
    add_sample(out, r, raw, config, spec);
  }
  return out;
}

PreparedDataset prepare_dataset(const SimulatedDataset& dataset, const PreprocessConfig& config,
                                EncoderPreset preset) {
  const EncoderSpec spec = EncoderSpec::preset(preset);
  PreparedDataset out;
  out.image_size = kTensorSize / spec.input_pool;
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    add_sample(out, dataset.records[i], dataset.images[i].image, config, spec);
  }
  return out;
}

}  // namespace dryfuse
