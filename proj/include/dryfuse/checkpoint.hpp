#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "dryfuse/config.hpp"
#include "dryfuse/experiments.hpp"

namespace dryfuse {

class CheckpointNotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckpointCorrupt : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Matrix value;
};

// Container: "DRYFUSE-CKPT", u32 version, u64 header length, JSON header,
// then each tensor's values as little-endian float64 in column-major order.
struct Checkpoint {
  Json header;
  std::vector<NamedTensor> tensors;

  const Matrix& tensor(const std::string& name) const;
};

// Written to a temporary sibling and renamed into place.
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::filesystem::path& path);

Json settings_to_json(const ExperimentSettings& settings);
ExperimentSettings settings_from_json(const Json& j);

// `provenance` is stored verbatim under header["provenance"].
Checkpoint arm_checkpoint(TrainedArm& model, const Json& provenance);
TrainedArm arm_from_checkpoint(const Checkpoint& checkpoint);

}  // namespace dryfuse
