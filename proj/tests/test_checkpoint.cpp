#include <doctest.h>

#include <fstream>
#include <numeric>

#include "dryfuse/checkpoint.hpp"
#include "support.hpp"

using namespace dryfuse;

namespace {

ExperimentSettings quick() {
  ExperimentSettings s;
  s.fusion = testing::small_fusion_config();
  s.nn_hidden = 8;
  s.training.epochs = 3;
  s.training.learning_rate = 1e-3;
  return s;
}

std::string bytes_of(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_SUITE("checkpoint") {

TEST_CASE("tensor container round trip") {
  const auto dir = testing::scratch_dir("ckpt_raw");
  Checkpoint c;
  c.header = {{"kind", "test"}, {"note", "x"}};
  Matrix a(2, 3);
  a << 1, 2, 3, 4, 5, 6e-300;
  c.tensors.push_back({"a", a});
  c.tensors.push_back({"b", Matrix::Constant(1, 1, -0.0)});
  write_checkpoint(dir / "c.ckpt", c);
  CHECK_FALSE(std::filesystem::exists(dir / "c.ckpt.partial"));
  const auto back = read_checkpoint(dir / "c.ckpt");
  CHECK(back.header.at("note") == "x");
  CHECK(back.tensor("a") == a);
  CHECK(back.tensor("a").rows() == 2);
  CHECK(std::signbit(back.tensor("b")(0, 0)));
  CHECK_THROWS_AS(back.tensor("zzz"), CheckpointCorrupt);
}

TEST_CASE("every arm restores to bitwise-identical predictions") {
  const auto data = testing::small_dataset(3);
  std::vector<std::size_t> rows(data.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  const auto dir = testing::scratch_dir("ckpt_arms");
  const Json prov = {{"tool_version", "test"}};
  for (Arm arm : {Arm::fusion, Arm::image_only, Arm::tabular, Arm::simplified_parallel,
                  Arm::nn_standard, Arm::ols_tabular, Arm::gp_standard}) {
    auto s = quick();
    TrainedArm m = train_arm(data, rows, arm, s, 17);
    const auto before = predict_arm(m, data, rows);
    const auto path = dir / (std::string(to_string(arm)) + ".ckpt");
    write_checkpoint(path, arm_checkpoint(m, prov));
    const TrainedArm back = arm_from_checkpoint(read_checkpoint(path));
    CHECK(back.arm == arm);
    CHECK(back.seed == 17);
    CHECK(back.history.epoch_loss == m.history.epoch_loss);
    const auto after = predict_arm(back, data, rows);
    CHECK_MESSAGE(before == after, to_string(arm));
    // Writing the restored model again gives the same bytes.
    TrainedArm again = arm_from_checkpoint(read_checkpoint(path));
    write_checkpoint(dir / "again.ckpt", arm_checkpoint(again, prov));
    CHECK(bytes_of(dir / "again.ckpt") == bytes_of(path));
  }
}

TEST_CASE("missing and damaged files") {
  const auto dir = testing::scratch_dir("ckpt_bad");
  try {
    read_checkpoint(dir / "none.ckpt");
    FAIL("expected CheckpointNotFound");
  } catch (const CheckpointNotFound& e) {
    CHECK(std::string(e.what()).find("checkpoint not found") != std::string::npos);
  }
  std::ofstream(dir / "junk.ckpt") << "hello";
  CHECK_THROWS_AS(read_checkpoint(dir / "junk.ckpt"), CheckpointCorrupt);

  Checkpoint c;
  c.header = {{"kind", "test"}};
  c.tensors.push_back({"a", Matrix::Ones(4, 4)});
  write_checkpoint(dir / "ok.ckpt", c);
  const std::string full = bytes_of(dir / "ok.ckpt");
  std::ofstream(dir / "short.ckpt", std::ios::binary) << full.substr(0, full.size() - 9);
  CHECK_THROWS_AS(read_checkpoint(dir / "short.ckpt"), CheckpointCorrupt);
  std::ofstream(dir / "long.ckpt", std::ios::binary) << full << "x";
  CHECK_THROWS_AS(read_checkpoint(dir / "long.ckpt"), CheckpointCorrupt);
}

TEST_CASE("settings survive serialisation") {
  auto s = quick();
  s.rgb_mode = RgbMode::per_channel;
  s.gp.noise_variance = 0.25;
  s.seed = 99;
  const auto back = settings_from_json(settings_to_json(s));
  CHECK(back.fusion.fused_dim == s.fusion.fused_dim);
  CHECK(back.fusion.ratio == s.fusion.ratio);
  CHECK(back.training.epochs == 3);
  CHECK(back.rgb_mode == RgbMode::per_channel);
  CHECK(back.gp.noise_variance == 0.25);
  CHECK(back.nn_hidden == 8);
  CHECK(back.seed == 99);
}

}  // TEST_SUITE
