#include <doctest.h>

#include "dryfuse/models.hpp"
#include "support.hpp"

using namespace dryfuse;

TEST_SUITE("models") {

TEST_CASE("ratio allocation") {
  CHECK(allocate_ratio({8, 1}, 1024).tabular_dims == 910);
  CHECK(allocate_ratio({8, 1}, 1024).image_dims == 114);
  CHECK(allocate_ratio({1, 1}, 1024).tabular_dims == 512);
  CHECK(allocate_ratio({2, 1}, 1024).tabular_dims == 682);
  CHECK(allocate_ratio({1, 100}, 1024).tabular_dims == 10);
  CHECK(allocate_ratio({100, 1}, 1024).tabular_dims == 1013);
  // Extreme ratios still leave one unit per branch.
  CHECK(allocate_ratio({1, 5000}, 1024).tabular_dims == 1);
  CHECK(allocate_ratio({5000, 1}, 1024).image_dims == 1);
  for (int rt = 1; rt <= 12; ++rt) {
    for (int ri = 1; ri <= 12; ++ri) {
      const auto a = allocate_ratio({rt, ri}, 1024);
      CHECK(a.tabular_dims + a.image_dims == 1024);
    }
  }
  CHECK_THROWS_AS(allocate_ratio({0, 1}, 1024), DomainError);
}

TEST_CASE("dimension chain at full width") {
  const auto data = testing::small_dataset(1);
  FusionConfig cfg;  // 1024 / 512 / 1024, ratio 8:1, tiny encoder
  FusionModel m(cfg, 3);
  Vector x(3);
  x << 0.1, 0.2, -0.3;
  const Vector t = m.encode_tabular(x);
  CHECK(t.size() == 512);

  const RunConfig rc = default_config();
  const auto sim = generate_dataset(rc.simulator(), 42, 1);
  const auto prepared = preprocess_image(sim.images[0].image, rc.preprocess);
  const Vector i = m.encode_image(prepared.tensor);
  CHECK(i.size() == 512);

  CHECK(m.head().allocation().tabular_dims == 910);
  CHECK(m.head().allocation().image_dims == 114);
  const Vector fused = m.fused_vector({t, i});
  CHECK(fused.size() == 1024);
  CHECK(fused.minCoeff() >= 0.0);
  const double y = m.fuse_predict({t, i});
  CHECK(y > 0.0);
  CHECK(y < 1.0);

  // Batch path agrees with the piecewise path.
  const auto b = testing::single_batch(data, 0, x);
  CHECK(m.predict(b)(0) == doctest::Approx(y).epsilon(1e-12));
}

TEST_CASE("encoder presets") {
  const auto tiny = EncoderSpec::preset(EncoderPreset::tiny);
  CHECK(tiny.input_pool == 4);
  CHECK(tiny.stage_widths == std::vector<int>{8, 16});
  const auto full = EncoderSpec::preset(EncoderPreset::resnet18);
  CHECK(full.stage_widths == std::vector<int>{64, 128, 256, 512});
  CHECK(full.blocks_per_stage == 2);
  CHECK(full.stem_kernel == 7);
  CHECK(parse_encoder_preset("tiny") == EncoderPreset::tiny);
  CHECK_THROWS(parse_encoder_preset("huge"));
}

TEST_CASE("initialisation is seeded") {
  auto cfg = testing::small_fusion_config(11);
  FusionModel a(cfg, 3), b(cfg, 3);
  cfg.seed = 12;
  FusionModel c(cfg, 3);
  const auto pa = a.params(), pb = b.params(), pc = c.params();
  REQUIRE(pa.size() == pb.size());
  bool all_equal = true, any_diff = false;
  for (std::size_t k = 0; k < pa.size(); ++k) {
    all_equal = all_equal && pa[k]->value == pb[k]->value;
    any_diff = any_diff || pa[k]->value != pc[k]->value;
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("predictions stay inside the unit interval") {
  const auto data = testing::small_dataset(2);
  FusionModel m(testing::small_fusion_config(), 3);
  for (std::size_t i = 0; i < data.size(); ++i) {
    Vector x = Vector::Random(3) * 50.0;
    const double y = m.predict(testing::single_batch(data, i, x))(0);
    CHECK(y > 0.0);
    CHECK(y < 1.0);
  }
}

TEST_CASE("invalid configurations") {
  FusionConfig cfg;
  cfg.fused_dim = 1;
  CHECK_THROWS_AS(cfg.check(), DomainError);
  cfg = FusionConfig{};
  cfg.ratio = {0, 1};
  CHECK_THROWS_AS(cfg.check(), DomainError);
}

}  // TEST_SUITE
