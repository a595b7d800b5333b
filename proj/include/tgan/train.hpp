#pragma once

#include "tgan/data.hpp"
#include "tgan/lipschitz.hpp"

namespace tgan {

enum class LossKind { Wgan, Gan };
enum class ClipKind { Svc, Weight, None };

std::string loss_kind_name(LossKind k);
LossKind loss_kind_from_name(const std::string& name);
std::string clip_kind_name(ClipKind k);
ClipKind clip_kind_from_name(const std::string& name);

struct TrainConfig {
  double alpha = 5e-5;     // learning rate
  int64_t n_d = 1;         // critic updates per generator update
  int64_t n_clip = 5;      // clipping interval (SVC)
  double c = 0.01;         // weight-clip box half-width
  LossKind loss_kind = LossKind::Wgan;
  ClipKind clip_kind = ClipKind::Svc;
  int64_t batch_size = 4;
  int64_t total_iters = 100;
  uint64_t seed = 0;
  double noise_sigma = 0.2;      // discriminator input noise, gan mode only
  int64_t checkpoint_every = 0;  // 0: only the final checkpoint

  void validate() const;
};

nlohmann::json train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

// RMSProp accumulator: per-parameter running mean of squared gradients.
struct OptState {
  std::map<std::string, std::vector<double>> v;
  int64_t step = 0;
};

// Critic loss descends the negated Wasserstein objective; both returned
// losses are meant to be minimized.
//   L_D = -(mean(real) - mean(fake)),  L_G = -mean(fake)
std::pair<Tensor, Tensor> wgan_losses(const Tensor& real_scores,
                                      const Tensor& fake_scores);

// Probabilities are clamped into [1e-7, 1-1e-7]; generator loss uses the
// non-saturating -ln D(G(z)).
std::pair<Tensor, Tensor> gan_losses(const Tensor& real_probs,
                                     const Tensor& fake_probs);

// v <- 0.9 v + 0.1 g^2 ; theta <- theta - alpha g / (sqrt(v) + 1e-8),
// applied to every parameter under `prefix` that has a gradient.
void rmsprop_update(ParamStore& params, const std::string& prefix,
                    OptState& state, double alpha);

// Clamps every parameter under `prefix` elementwise into [-c, c].
void weight_clip(ParamStore& params, double c,
                 const std::string& prefix = "d.");

struct TrainStats {
  int64_t critic_updates = 0;
  int64_t generator_updates = 0;
  std::vector<int64_t> clip_iters;  // iterations where SVC ran
  int64_t iters_completed = 0;
};

// Full training loop: per iteration, n_d critic updates then one generator
// update; SVC at iterations {1, 1+n_clip, ...} (clip_kind svc) or a weight
// clamp after every critic update (clip_kind weight). Writes
// `metrics.jsonl` (one record per iteration: iter, loss_d, loss_g, wall_ms,
// max_sigma at clip events) and a final checkpoint `ckpt_final` under
// out_dir. A non-finite loss saves `ckpt_diverged` and raises
// NumericalError. Deterministic for a fixed config seed.
TrainStats train(const TrainConfig& config, ParamStore& model,
                 const DatasetHandle& data,
                 const std::filesystem::path& out_dir);

}  // namespace tgan
