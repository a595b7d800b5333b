#include "tgan/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tgan {

using nlohmann::json;

ThresholdResult calibrate_threshold(const std::vector<double>& real_scores,
                                    const std::vector<double>& fake_scores) {
  if (real_scores.size() < 100 || fake_scores.size() < 100)
    throw ValueError("calibrate_threshold: need >= 100 samples per side");

  std::vector<double> combined;
  combined.reserve(real_scores.size() + fake_scores.size());
  combined.insert(combined.end(), real_scores.begin(), real_scores.end());
  combined.insert(combined.end(), fake_scores.begin(), fake_scores.end());
  std::sort(combined.begin(), combined.end());
  combined.erase(std::unique(combined.begin(), combined.end()),
                 combined.end());
  if (combined.size() < 2)
    throw ValueError(
        "calibrate_threshold: all scores equal (non-discriminative critic)");

  // Candidates: a sentinel below the range, every midpoint between adjacent
  // distinct scores, a sentinel above. Ascending order, so ties resolve to
  // the lowest optimal midpoint.
  std::vector<double> candidates;
  candidates.push_back(combined.front() - 1.0);
  for (size_t i = 0; i + 1 < combined.size(); ++i)
    candidates.push_back(0.5 * (combined[i] + combined[i + 1]));
  candidates.push_back(combined.back() + 1.0);

  auto balanced_accuracy = [&](double tau) {
    size_t tp = 0, tn = 0;
    for (double s : real_scores) tp += s >= tau ? 1 : 0;
    for (double s : fake_scores) tn += s < tau ? 1 : 0;
    return 0.5 * (static_cast<double>(tp) / real_scores.size() +
                  static_cast<double>(tn) / fake_scores.size());
  };

  ThresholdResult best;
  best.balanced_accuracy = -1.0;
  for (double tau : candidates) {
    const double ba = balanced_accuracy(tau);
    if (ba > best.balanced_accuracy) {
      best.balanced_accuracy = ba;
      best.threshold = tau;
    }
  }
  best.discriminative = best.balanced_accuracy > 0.55;
  return best;
}

namespace {

std::vector<double> score_all(const ParamStore& critic, const Tensor& videos,
                              const std::optional<Tensor>& labels) {
  const int64_t n = videos.size(0);
  constexpr int64_t kChunk = 16;
  std::vector<double> out;
  out.reserve(static_cast<size_t>(n));
  for (int64_t start = 0; start < n; start += kChunk) {
    const int64_t len = std::min(kChunk, n - start);
    Tensor part = slice(videos, 0, start, len);
    if (labels) part = attach_label_voxel(part, slice(*labels, 0, start, len));
    Tensor scores = discriminate_batch(critic, part);
    for (int64_t i = 0; i < len; ++i) out.push_back(scores.at(i));
  }
  return out;
}

struct FakeSet {
  Tensor videos;
  std::optional<Tensor> labels;
};

// Chunked so scoring two identical models is bitwise comparable.
FakeSet make_fakes(const ParamStore& model, int64_t n, uint64_t seed) {
  Rng rng(seed);
  Tensor z0 = sample_z0(model.config, n, rng);
  FakeSet set;
  if (model.config.num_categories > 0) {
    std::uniform_int_distribution<int64_t> dist(
        0, model.config.num_categories - 1);
    Tensor labels = zeros({n, model.config.num_categories});
    for (int64_t i = 0; i < n; ++i)
      labels.mutable_data()[static_cast<size_t>(
          i * model.config.num_categories + dist(rng))] = 1.0;
    set.labels = labels;
  }
  constexpr int64_t kChunk = 16;
  for (int64_t start = 0; start < n; start += kChunk) {
    const int64_t len = std::min(kChunk, n - start);
    std::optional<Tensor> lab;
    if (set.labels) lab = slice(*set.labels, 0, start, len);
    Tensor part =
        generate_batch(model, slice(z0, 0, start, len), lab, BnMode::Infer)
            .detach();
    set.videos = start == 0 ? part : concat(set.videos, part, 0);
  }
  return set;
}

double frac_at_least(const std::vector<double>& scores, double tau) {
  size_t hits = 0;
  for (double s : scores) hits += s >= tau ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(scores.size());
}

}  // namespace

json GamReport::to_json() const {
  json j{{"threshold_a", threshold_a},
         {"threshold_b", threshold_b},
         {"err_a_on_b_samples", err_a_on_b_samples},
         {"err_b_on_a_samples", err_b_on_a_samples},
         {"err_a_on_real", err_a_on_real},
         {"err_b_on_real", err_b_on_real},
         {"winner", winner},
         {"zero_denominator", zero_denominator}};
  j["score"] = std::isfinite(score) ? json(score) : json("inf");
  return j;
}

GamReport gam_score(const ParamStore& model_a, const ParamStore& model_b,
                    const DatasetHandle& held_out_real, int64_t n_samples,
                    Rng& rng) {
  if (n_samples < 100)
    throw ValueError("gam_score: need >= 100 samples for calibration");
  const ModelConfig& ca = model_a.config;
  const ModelConfig& cb = model_b.config;
  if (ca.frames != cb.frames || ca.resolution != cb.resolution ||
      ca.channels != cb.channels || ca.num_categories != cb.num_categories)
    throw ValueError("gam_score: models have incompatible output shapes");

  // Shared sub-seeds: both models draw the same latents and both critics see
  // the same real windows, making the metric exactly symmetric.
  const uint64_t base = rng();
  const uint64_t seed_fake = derive_seed(base, 1);
  Rng real_rng(derive_seed(base, 2));

  Batch real = sample_batch(held_out_real, ca.frames, n_samples, real_rng);
  std::optional<Tensor> real_labels;
  if (ca.num_categories > 0) {
    Tensor onehot = zeros({n_samples, ca.num_categories});
    for (int64_t i = 0; i < n_samples; ++i)
      onehot.mutable_data()[static_cast<size_t>(
          i * ca.num_categories +
          static_cast<int64_t>(real.labels->at(i)))] = 1.0;
    real_labels = onehot;
  }

  FakeSet fakes_a = make_fakes(model_a, n_samples, seed_fake);
  FakeSet fakes_b = make_fakes(model_b, n_samples, seed_fake);

  const auto real_by_a = score_all(model_a, real.videos, real_labels);
  const auto real_by_b = score_all(model_b, real.videos, real_labels);
  const auto own_a = score_all(model_a, fakes_a.videos, fakes_a.labels);
  const auto own_b = score_all(model_b, fakes_b.videos, fakes_b.labels);
  const auto cross_a_on_b = score_all(model_a, fakes_b.videos, fakes_b.labels);
  const auto cross_b_on_a = score_all(model_b, fakes_a.videos, fakes_a.labels);

  GamReport r;
  r.threshold_a = calibrate_threshold(real_by_a, own_a).threshold;
  r.threshold_b = calibrate_threshold(real_by_b, own_b).threshold;
  // err = fraction of the opponent's fakes that cross the real-side
  // threshold.
  r.err_b_on_a_samples = frac_at_least(cross_b_on_a, r.threshold_b);
  r.err_a_on_b_samples = frac_at_least(cross_a_on_b, r.threshold_a);
  r.err_a_on_real = 1.0 - frac_at_least(real_by_a, r.threshold_a);
  r.err_b_on_real = 1.0 - frac_at_least(real_by_b, r.threshold_b);

  const double num = r.err_b_on_a_samples, den = r.err_a_on_b_samples;
  constexpr double kDelta = 0.05;
  if (den == 0.0 && num == 0.0) {
    // Neither model fools the other at all; call it a degenerate tie.
    r.score = 1.0;
    r.winner = "tie";
    r.zero_denominator = true;
  } else if (den == 0.0) {
    r.score = std::numeric_limits<double>::infinity();
    r.winner = "A";
    r.zero_denominator = true;
  } else {
    r.score = num / den;
    r.winner = r.score > 1.0 + kDelta ? "A"
               : r.score < 1.0 - kDelta ? "B"
                                        : "tie";
  }
  return r;
}

MotionStats motion_stats(const VideoClip& clip) {
  if (clip.frames.dim() != 4)
    throw ValueError("motion_stats: expected [T, C, H, W] frames");
  const int64_t t = clip.frames.size(0);
  if (t < 2) throw ValueError("motion_stats: need at least two frames");
  const int64_t frame_sz = clip.frames.numel() / t;
  MotionStats stats;
  for (int64_t f = 0; f < t; ++f) {
    double energy = 0.0;
    for (int64_t i = 0; i < frame_sz; ++i)
      energy += std::abs(clip.frames.at(f * frame_sz + i));
    stats.per_frame_energy.push_back(energy / static_cast<double>(frame_sz));
    if (f + 1 < t) {
      double diff = 0.0;
      for (int64_t i = 0; i < frame_sz; ++i)
        diff += std::abs(clip.frames.at((f + 1) * frame_sz + i) -
                         clip.frames.at(f * frame_sz + i));
      stats.mean_abs_frame_diff += diff / static_cast<double>(frame_sz);
    }
  }
  stats.mean_abs_frame_diff /= static_cast<double>(t - 1);
  return stats;
}

}  // namespace tgan
