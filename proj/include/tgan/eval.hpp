#pragma once

#include "tgan/data.hpp"

namespace tgan {

struct ThresholdResult {
  double threshold = 0.0;
  double balanced_accuracy = 0.0;
  // False when the critic barely separates real from fake (BA <= 0.55).
  bool discriminative = false;
};

// Threshold maximizing the balanced accuracy of (score >= tau -> real);
// candidate thresholds are the midpoints between adjacent distinct scores
// of the combined sample, ties resolved by the lowest optimal midpoint.
// Requires >= 100 samples per side; all-equal scores raise ValueError.
ThresholdResult calibrate_threshold(const std::vector<double>& real_scores,
                                    const std::vector<double>& fake_scores);

struct GamReport {
  double threshold_a = 0.0, threshold_b = 0.0;
  // err_X_on_Y: fraction of Y's fakes that critic X classifies as real.
  double err_a_on_b_samples = 0.0, err_b_on_a_samples = 0.0;
  // Fraction of held-out real samples each critic classifies as fake.
  double err_a_on_real = 0.0, err_b_on_real = 0.0;
  double score = 0.0;  // err(D_B on A's fakes) / err(D_A on B's fakes)
  std::string winner;  // "A", "B" or "tie"
  bool zero_denominator = false;

  nlohmann::json to_json() const;
};

// Generative Adversarial Metric between two trained models: each critic is
// calibrated on held-out real clips versus its own model's fakes, then
// scored on the opponent's fakes. score > 1 + 0.05 -> A wins, < 1 - 0.05
// -> B wins, otherwise a tie. Both models see identical latent draws, so
// comparing a model with itself yields exactly 1.0.
GamReport gam_score(const ParamStore& model_a, const ParamStore& model_b,
                    const DatasetHandle& held_out_real, int64_t n_samples,
                    Rng& rng);

struct MotionStats {
  double mean_abs_frame_diff = 0.0;
  std::vector<double> per_frame_energy;  // mean |value| per frame
};

MotionStats motion_stats(const VideoClip& clip);

}  // namespace tgan
