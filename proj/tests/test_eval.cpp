#include "doctest.h"

#include <filesystem>

#include "tgan/eval.hpp"

using namespace tgan;
namespace fs = std::filesystem;

namespace {

ModelConfig eval_model() {
  ModelConfig c;
  c.k0 = 4;
  c.k1 = 4;
  c.frames = 4;
  c.resolution = 8;
  c.channels = 1;
  c.base_channels = 4;
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

DatasetHandle eval_data(const std::string& name) {
  auto dir = fs::temp_directory_path() / "tgan_eval_tests" / name;
  fs::remove_all(dir);
  DataConfig c;
  c.num_clips = 10;
  c.clip_len = 6;
  c.train_frames = 4;
  c.resolution = 8;
  c.seed = 44;
  return synthesize(c, dir);
}

// Independent brute-force scan: evaluate balanced accuracy at every
// candidate midpoint by direct counting.
double brute_force_threshold(const std::vector<double>& real,
                             const std::vector<double>& fake) {
  std::vector<double> all;
  all.insert(all.end(), real.begin(), real.end());
  all.insert(all.end(), fake.begin(), fake.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  std::vector<double> candidates{all.front() - 1.0};
  for (size_t i = 0; i + 1 < all.size(); ++i)
    candidates.push_back(0.5 * (all[i] + all[i + 1]));
  candidates.push_back(all.back() + 1.0);
  double best_ba = -1.0, best_tau = 0.0;
  for (double tau : candidates) {
    double tp = 0, tn = 0;
    for (double s : real)
      if (s >= tau) tp += 1;
    for (double s : fake)
      if (s < tau) tn += 1;
    const double ba = 0.5 * (tp / real.size() + tn / fake.size());
    if (ba > best_ba) {
      best_ba = ba;
      best_tau = tau;
    }
  }
  return best_tau;
}

}  // namespace

TEST_CASE("separable scores calibrate to the midpoint") {
  std::vector<double> real(120, 1.0), fake(120, 0.0);
  ThresholdResult r = calibrate_threshold(real, fake);
  CHECK(r.threshold == doctest::Approx(0.5));
  CHECK(r.balanced_accuracy == doctest::Approx(1.0));
  CHECK(r.discriminative);
}

TEST_CASE("identical distributions are flagged non-discriminative") {
  Rng rng(5);
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> real, fake;
  for (int i = 0; i < 500; ++i) real.push_back(dist(rng));
  for (int i = 0; i < 500; ++i) fake.push_back(dist(rng));
  ThresholdResult r = calibrate_threshold(real, fake);
  CHECK(r.balanced_accuracy < 0.6);  // near chance
  CHECK_FALSE(r.balanced_accuracy > 0.65);
}

TEST_CASE("all-equal scores raise an error") {
  std::vector<double> real(150, 0.7), fake(150, 0.7);
  CHECK_THROWS_AS(calibrate_threshold(real, fake), ValueError);
  std::vector<double> few(50, 0.0);
  CHECK_THROWS_AS(calibrate_threshold(few, few), ValueError);
}

TEST_CASE("calibration matches the brute-force scan on mixed samples") {
  Rng rng(17);
  std::normal_distribution<double> real_dist(1.0, 1.0), fake_dist(-0.5, 1.2);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> real, fake;
    for (int i = 0; i < 300; ++i) real.push_back(real_dist(rng));
    for (int i = 0; i < 260; ++i) fake.push_back(fake_dist(rng));
    ThresholdResult r = calibrate_threshold(real, fake);
    CHECK(r.threshold == brute_force_threshold(real, fake));
    CHECK(r.discriminative);
  }
}

TEST_CASE("gam of a model against itself is exactly one") {
  auto data = eval_data("self");
  ParamStore model = build(eval_model(), 31);
  Rng rng(9);
  GamReport r = gam_score(model, model, data, 100, rng);
  CHECK(r.score == 1.0);
  CHECK(r.winner == "tie");
  CHECK(r.threshold_a == r.threshold_b);
  CHECK(r.err_a_on_real == r.err_b_on_real);
}

TEST_CASE("gam argument swap inverts the score and flips the winner") {
  auto data = eval_data("swap");
  ParamStore a = build(eval_model(), 1);
  ParamStore b = build(eval_model(), 2);
  Rng rng_ab(123), rng_ba(123);
  GamReport ab = gam_score(a, b, data, 100, rng_ab);
  GamReport ba = gam_score(b, a, data, 100, rng_ba);
  CHECK(ab.err_b_on_a_samples == ba.err_a_on_b_samples);
  CHECK(ab.err_a_on_b_samples == ba.err_b_on_a_samples);
  if (std::isfinite(ab.score) && std::isfinite(ba.score) && ab.score > 0.0) {
    CHECK(ba.score == doctest::Approx(1.0 / ab.score));
    if (ab.winner == "A") CHECK(ba.winner == "B");
    if (ab.winner == "B") CHECK(ba.winner == "A");
    if (ab.winner == "tie") CHECK(ba.winner == "tie");
  }
  nlohmann::json j = ab.to_json();
  CHECK(j.contains("score"));
  CHECK(j.at("winner").get<std::string>() == ab.winner);
}

TEST_CASE("gam validates its inputs") {
  auto data = eval_data("validate");
  ParamStore model = build(eval_model(), 3);
  Rng rng(1);
  CHECK_THROWS_AS(gam_score(model, model, data, 50, rng), ValueError);

  ModelConfig other = eval_model();
  other.frames = 8;
  other.temporal_stack.push_back(other.temporal_stack.back());
  other.temporal_stack[3].out_channels = 4;
  ParamStore mismatched = build(other, 3);
  CHECK_THROWS_AS(gam_score(model, mismatched, data, 100, rng), ValueError);
}

TEST_CASE("motion stats basics") {
  VideoClip still;
  still.frames = full({3, 1, 2, 2}, 0.5);
  MotionStats s = motion_stats(still);
  CHECK(s.mean_abs_frame_diff == 0.0);
  REQUIRE(s.per_frame_energy.size() == 3);
  CHECK(s.per_frame_energy[0] == doctest::Approx(0.5));

  VideoClip flip;
  flip.frames = from_data({2, 1, 1, 2}, {1.0, 1.0, -1.0, -1.0});
  CHECK(motion_stats(flip).mean_abs_frame_diff == doctest::Approx(2.0));

  VideoClip single;
  single.frames = zeros({1, 1, 2, 2});
  CHECK_THROWS_AS(motion_stats(single), ValueError);
}

TEST_CASE("synthesized clips always register motion") {
  auto data = eval_data("motion");
  for (int64_t i = 0; i < data.num_clips(); ++i) {
    Tensor clip = data.load_clip(i);  // [1, L, H, W]
    VideoClip vc;
    vc.frames = reshape(clip, {data.config.clip_len, 1,
                               data.config.resolution,
                               data.config.resolution});
    CHECK(motion_stats(vc).mean_abs_frame_diff > 0.0);
  }
}
