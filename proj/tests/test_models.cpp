#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "tgan/models.hpp"

using namespace tgan;
namespace fs = std::filesystem;

namespace {

// Small architecture for fast forward-pass tests: T = 4, 8x8 grayscale.
ModelConfig tiny_config(int64_t categories = 0) {
  ModelConfig c;
  c.k0 = 4;
  c.k1 = 4;
  c.frames = 4;
  c.resolution = 8;
  c.channels = 1;
  c.base_channels = 4;
  c.num_categories = categories;
  c.image_branch_channels = 8;
  auto spec = [](LayerKind kind, int64_t k, int64_t out, int64_t pad,
                 int64_t stride) {
    LayerSpec s;
    s.kind = kind;
    s.kernel = k;
    s.out_channels = out;
    s.padding = pad;
    s.stride = stride;
    return s;
  };
  c.temporal_stack = {spec(LayerKind::Deconv1d, 1, 8, 0, 1),
                      spec(LayerKind::Deconv1d, 4, 8, 1, 2),
                      spec(LayerKind::Deconv1d, 4, 4, 1, 2)};
  c.image_stack = {spec(LayerKind::Deconv2d, 4, 1, 1, 2)};
  c.disc_stack = {spec(LayerKind::Conv3d, 4, 4, 1, 2)};
  c.validate();
  return c;
}

}  // namespace

TEST_CASE("paper64 preset matches the published stacks") {
  ModelConfig c = ModelConfig::preset("paper64");
  CHECK(c.k0 == 100);
  CHECK(c.k1 == 100);
  CHECK(c.frames == 16);
  CHECK(c.resolution == 64);
  CHECK(c.channels == 3);
  REQUIRE(c.temporal_stack.size() == 5);
  CHECK(c.temporal_stack[0].out_channels == 512);
  CHECK(c.temporal_stack[0].kernel == 1);
  CHECK(c.temporal_stack[0].stride == 1);
  CHECK(c.temporal_stack[4].out_channels == 100);
  REQUIRE(c.image_stack.size() == 5);
  CHECK(c.image_stack[0].out_channels == 256);
  CHECK(c.image_stack[4].kernel == 3);
  CHECK(c.image_stack[4].stride == 1);
  CHECK(c.image_stack[4].out_channels == 3);
  REQUIRE(c.disc_stack.size() == 4);
  CHECK(c.disc_stack[3].out_channels == 512);
  // 512 channels x (T 16 -> 8 -> 4 -> 2 -> 1) x (64 -> ... -> 4)^2
  CHECK(c.disc_flat_size() == 512 * 1 * 4 * 4);
}

TEST_CASE("desk32 preset closes all three size traces") {
  ModelConfig c = ModelConfig::preset("desk32");
  CHECK(c.k0 == 25);
  CHECK(c.resolution == 32);
  CHECK(c.channels == 1);
  CHECK(c.temporal_stack.back().out_channels == 25);
  CHECK(c.disc_flat_size() == 64 * 2 * 4 * 4);
}

TEST_CASE("validate rejects broken size traces") {
  ModelConfig c = ModelConfig::preset("paper64");
  c.frames = 17;
  CHECK_THROWS_AS(c.validate(), ValueError);

  ModelConfig c2 = ModelConfig::preset("paper64");
  c2.image_stack[1].stride = 1;
  CHECK_THROWS_AS(c2.validate(), ValueError);

  ModelConfig c3 = ModelConfig::preset("paper64");
  c3.temporal_stack.back().out_channels = 99;
  CHECK_THROWS_AS(c3.validate(), ValueError);

  CHECK_THROWS_AS(ModelConfig::preset("nope"), ValueError);
}

TEST_CASE("build produces the expected parameter shapes") {
  ParamStore store = build(ModelConfig::preset("paper64"), 1);
  CHECK(store.at("g0.deconv0.w").shape() == Shape{512, 100, 1});
  CHECK(store.at("g0.deconv1.w").shape() == Shape{256, 512, 4});
  CHECK(store.at("g1.lin_z0.w").shape() == Shape{256 * 16, 100});
  CHECK(store.at("g1.lin_z1.w").shape() == Shape{256 * 16, 100});
  CHECK(store.at("g1.deconv0.w").shape() == Shape{256, 512, 4, 4});
  CHECK(store.at("d.conv0.w").shape() == Shape{64, 3, 4, 4, 4});
  CHECK(store.at("d.conv0.b").shape() == Shape{64});
  CHECK(store.at("d.fc.w").shape() == Shape{1, 512 * 16});
  CHECK(store.bn.count("d.bn1") == 1);
  CHECK(store.bn.count("d.bn0") == 0);  // no BN on the first conv
  CHECK(store.at("d.bn1.gamma").shape() == Shape{128});
  // Image generator init range is tight around zero.
  for (double v : store.at("g1.deconv0.w").data()) CHECK(std::abs(v) <= 0.01);
}

TEST_CASE("temporal generator maps z0 to T per-frame latents in (-1, 1)") {
  ParamStore store = build(tiny_config(), 3);
  Rng rng(5);
  Tensor z0 = sample_z0(store.config, 2, rng);
  Tensor z1 = temporal_forward(store, z0);
  CHECK(z1.shape() == Shape{2, 4, 4});
  for (double v : z1.data()) {
    CHECK(v > -1.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("image generator emits frames in (-1, 1)") {
  ParamStore store = build(tiny_config(), 3);
  Rng rng(6);
  Tensor z0 = sample_z0(store.config, 3, rng);
  Tensor z1 = uniform({3, 4}, -1.0, 1.0, rng);
  Tensor frames = image_forward(store, z0, z1, std::nullopt);
  CHECK(frames.shape() == Shape{3, 1, 8, 8});
  for (double v : frames.data()) {
    CHECK(v > -1.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("generate_batch produces [N, C, T, H, W] videos deterministically") {
  ParamStore store = build(tiny_config(), 9);
  Rng rng_a(17), rng_b(17);
  Tensor za = sample_z0(store.config, 2, rng_a);
  Tensor zb = sample_z0(store.config, 2, rng_b);
  Tensor va = generate_batch(store, za, std::nullopt);
  Tensor vb = generate_batch(store, zb, std::nullopt);
  CHECK(va.shape() == Shape{2, 1, 4, 8, 8});
  for (size_t i = 0; i < va.data().size(); ++i)
    CHECK(va.data()[i] == vb.data()[i]);
}

TEST_CASE("interpolation reproduces original frames at the key indices") {
  ParamStore store = build(tiny_config(), 21);
  Rng rng(2);
  Tensor z0 = sample_z0(store.config, 1, rng);
  VideoClip base = generate_video(store, z0);
  CHECK(base.frames.shape() == Shape{4, 1, 8, 8});
  VideoClip dense = interpolate_frames(store, z0, 3);
  CHECK(dense.frames.shape() == Shape{3 * 3 + 1, 1, 8, 8});
  const int64_t frame_sz = 64;
  for (int64_t t = 0; t < 4; ++t)
    for (int64_t i = 0; i < frame_sz; ++i)
      CHECK(dense.frames.at((3 * t) * frame_sz + i) ==
            base.frames.at(t * frame_sz + i));
}

TEST_CASE("interpolated latent frames vary smoothly between keys") {
  ParamStore store = build(tiny_config(), 21);
  Rng rng(8);
  Tensor z0 = sample_z0(store.config, 1, rng);
  VideoClip dense = interpolate_frames(store, z0, 4);
  // Midpoint frames should not all coincide with either endpoint.
  const int64_t frame_sz = 64;
  double diff = 0.0;
  for (int64_t i = 0; i < frame_sz; ++i)
    diff += std::abs(dense.frames.at(2 * frame_sz + i) -
                     dense.frames.at(0 * frame_sz + i));
  CHECK(diff > 0.0);
}

TEST_CASE("discriminator scores a batch as [N, 1]") {
  ParamStore store = build(tiny_config(), 4);
  Rng rng(9);
  Tensor x = uniform({3, 1, 4, 8, 8}, -1.0, 1.0, rng);
  Tensor scores = discriminate_batch(store, x);
  CHECK(scores.shape() == Shape{3, 1});
  CHECK(scores.all_finite());

  Tensor bad = uniform({3, 2, 4, 8, 8}, -1.0, 1.0, rng);
  CHECK_THROWS_AS(discriminate_batch(store, bad), ValueError);

  DiscOptions opts;
  opts.noise_sigma = 0.2;
  CHECK_THROWS_AS(discriminate_batch(store, x, opts), ValueError);  // no rng
  opts.rng = &rng;
  Tensor noisy = discriminate_batch(store, x, opts);
  CHECK(noisy.shape() == Shape{3, 1});
}

TEST_CASE("conditional model threads one-hot labels through both networks") {
  ParamStore store = build(tiny_config(2), 13);
  CHECK(store.at("g0.deconv0.w").shape() == Shape{8, 4 + 2, 1});
  CHECK(store.at("g1.lin_label.w").shape() == Shape{8 * 16, 2});
  CHECK(store.at("d.conv0.w").shape() == Shape{4, 1 + 2, 4, 4, 4});

  Rng rng(3);
  Tensor z0 = sample_z0(store.config, 1, rng);
  VideoClip clip = generate_video(store, z0, 1);
  CHECK(clip.frames.shape() == Shape{4, 1, 8, 8});
  CHECK(clip.label == 1);
  double score = discriminate(store, clip);
  CHECK(std::isfinite(score));

  VideoClip unlabeled = clip;
  unlabeled.label = std::nullopt;
  CHECK_THROWS_AS(discriminate(store, unlabeled), ValueError);
}

TEST_CASE("one_hot and label voxels") {
  Tensor h = one_hot(2, 4);
  CHECK(h.shape() == Shape{1, 4});
  CHECK(h.at(2) == 1.0);
  CHECK(h.at(0) == 0.0);
  CHECK_THROWS_AS(one_hot(4, 4), ValueError);
  CHECK_THROWS_AS(one_hot(-1, 4), ValueError);

  Tensor batch = ones({2, 1, 2, 2, 2});
  Tensor labels = from_data({2, 2}, {1, 0, 0, 1});
  Tensor out = attach_label_voxel(batch, labels);
  CHECK(out.shape() == Shape{2, 3, 2, 2, 2});
  // Batch 0 carries label 0: channel 1 all ones, channel 2 all zeros.
  CHECK(out.at(1 * 8 + 0) == 1.0);
  CHECK(out.at(2 * 8 + 0) == 0.0);
  // Batch 1 carries label 1.
  CHECK(out.at(3 * 8 + 1 * 8 + 0) == 0.0);
  CHECK(out.at(3 * 8 + 2 * 8 + 0) == 1.0);
}

TEST_CASE("discriminator layer plan lists every Lipschitz-relevant stage") {
  auto plan = discriminator_layer_plan(ModelConfig::preset("paper64"));
  // conv0, lrelu, (conv, bn, lrelu) x3, fc
  REQUIRE(plan.size() == 2 + 3 * 3 + 1);
  CHECK(plan[0].kind == LayerKind::Conv3d);
  CHECK(plan[0].param_name == "d.conv0.w");
  CHECK(plan[1].kind == LayerKind::LeakyRelu);
  CHECK(plan[3].kind == LayerKind::BatchNorm);
  CHECK(plan[3].param_name == "d.bn1");
  CHECK(plan.back().kind == LayerKind::Linear);
  CHECK(plan.back().param_name == "d.fc.w");
}

TEST_CASE("checkpoint round trip restores parameters, stats and config") {
  ParamStore store = build(tiny_config(2), 77);
  // Perturb a BN running stat so the round trip exercises non-defaults.
  store.bn.at("g0.bn0").running_mean[0] = 0.25;
  store.bn.at("g0.bn0").running_std[1] = 1.5;

  const auto dir = fs::temp_directory_path() / "tgan_ckpt_test";
  fs::remove_all(dir);
  save_checkpoint(dir, store);
  CHECK(fs::exists(dir / "manifest.json"));
  CHECK(fs::exists(dir / "g0_deconv0_w.tnsr"));

  ParamStore back = load_checkpoint(dir);
  CHECK(back.allclose(store, 0.0));
  CHECK(back.bn.at("g0.bn0").running_mean[0] == 0.25);
  CHECK(back.bn.at("g0.bn0").running_std[1] == 1.5);
  CHECK(back.config.k0 == store.config.k0);
  CHECK(back.config.num_categories == 2);
  CHECK(back.kinds.at("d.fc.w") == ParamKind::LinearWeight);

  // Restored models generate identical videos.
  Rng rng(31);
  Tensor z0 = sample_z0(store.config, 1, rng);
  VideoClip a = generate_video(store, z0, 0);
  VideoClip b = generate_video(back, z0, 0);
  for (size_t i = 0; i < a.frames.data().size(); ++i)
    CHECK(a.frames.data()[i] == b.frames.data()[i]);
}

TEST_CASE("corrupt checkpoints are rejected") {
  const auto dir = fs::temp_directory_path() / "tgan_ckpt_missing";
  fs::remove_all(dir);
  CHECK_THROWS_AS(load_checkpoint(dir), ValueError);

  fs::create_directories(dir);
  std::ofstream(dir / "manifest.json") << "{not json";
  CHECK_THROWS_AS(load_checkpoint(dir), ValueError);
}

TEST_CASE("ablation toggle drops the z0 image branch") {
  ModelConfig c = tiny_config();
  c.image_uses_z0 = false;
  ParamStore store = build(c, 55);
  CHECK(store.params.count("g1.lin_z0.w") == 0);
  Rng rng(1);
  Tensor z0 = sample_z0(c, 1, rng);
  VideoClip clip = generate_video(store, z0);
  CHECK(clip.frames.shape() == Shape{4, 1, 8, 8});
}
