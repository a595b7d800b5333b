#pragma once

#include <filesystem>
#include <map>
#include <optional>

#include "json.hpp"
#include "tgan/nn.hpp"

namespace tgan {

// Network architecture for the temporal generator, image generator and
// discriminator. Stacks list only the conv/deconv layers; normalization and
// activations follow the fixed pattern described in build().
struct ModelConfig {
  int64_t k0 = 100;            // latent dim of z0
  int64_t k1 = 100;            // latent dim of each per-frame latent
  int64_t frames = 16;         // T
  int64_t resolution = 64;     // H = W
  int64_t channels = 3;        // video channels
  int64_t base_channels = 64;  // first discriminator conv channels
  int64_t num_categories = 0;  // V; 0 = unconditional
  bool image_uses_z0 = true;   // ablation toggle: false drops the z0 branch

  int64_t image_base_size = 4;        // spatial size after the linear reshape
  int64_t image_branch_channels = 256;  // channels per linear branch

  std::vector<LayerSpec> temporal_stack;  // deconv1d layers, last ends at T
  std::vector<LayerSpec> image_stack;     // deconv2d layers after the concat
  std::vector<LayerSpec> disc_stack;      // conv3d layers

  double leaky_slope = 0.2;

  static ModelConfig preset(const std::string& name);  // paper64 | desk32
  void validate() const;

  int64_t g0_in_channels() const { return k0 + num_categories; }
  int64_t image_branch_count() const {
    return 1 + (image_uses_z0 ? 1 : 0) + (num_categories > 0 ? 1 : 0);
  }
  int64_t disc_in_channels() const { return channels + num_categories; }
  // Flattened size entering the final discriminator linear layer.
  int64_t disc_flat_size() const;
};

enum class ParamKind { LinearWeight, ConvWeight, Bias, BnGamma, BnBeta };

std::string param_kind_name(ParamKind k);
ParamKind param_kind_from_name(const std::string& name);

// Named parameter map plus batch-norm running statistics; the unit of
// checkpointing and clipping. Partitioned by name prefix: "g0.", "g1.", "d.".
struct ParamStore {
  ModelConfig config;
  std::map<std::string, Tensor> params;
  std::map<std::string, ParamKind> kinds;
  // Running statistics, keyed by layer name (e.g. "d.bn1"). Mutable: the
  // EMA update is the documented side effect of train-mode forwards.
  mutable std::map<std::string, BnState> bn;

  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  void add(const std::string& name, ParamKind kind, Tensor t);
  ParamStore clone() const;  // deep copy of tensors and stats
  void set_requires_grad(const std::string& prefix, bool value);
  void zero_grad(const std::string& prefix);
  bool allclose(const ParamStore& other, double atol) const;
};

// T x C x H x W video in [-1, 1] with optional category label.
struct VideoClip {
  Tensor frames;
  std::optional<int64_t> label;
};

Tensor one_hot(int64_t label, int64_t count);

// Deterministic parameter initialization: HeNormal for the temporal
// generator and discriminator, uniform(-0.01, 0.01) for the image generator.
ParamStore build(const ModelConfig& config, uint64_t seed);

// Options threaded through discriminator forwards.
struct DiscOptions {
  BnMode mode = BnMode::Infer;
  double noise_sigma = 0.0;  // Gaussian noise added to every layer input
  bool use_gamma = true;     // false: BN scale fixed at 1 (noise baseline)
  Rng* rng = nullptr;        // required when noise_sigma > 0
};

// z0: [N, K0] (+ one-hot columns when conditional) -> [N, T, K1], in (-1,1).
Tensor temporal_forward(const ParamStore& store, const Tensor& z0_full,
                        BnMode mode = BnMode::Infer);

// (z0 [N,K0], z1 [N,K1], optional label one-hots [N,V]) -> [N, C, H, W].
Tensor image_forward(const ParamStore& store, const Tensor& z0,
                     const Tensor& z1, const std::optional<Tensor>& labels,
                     BnMode mode = BnMode::Infer);

// Batch path used by training: z0 [N,K0] -> [N, C, T, H, W].
Tensor generate_batch(const ParamStore& store, const Tensor& z0,
                      const std::optional<Tensor>& labels,
                      BnMode mode = BnMode::Infer);

// Single-clip convenience wrapper around generate_batch.
VideoClip generate_video(const ParamStore& store, const Tensor& z0,
                         std::optional<int64_t> label = std::nullopt,
                         BnMode mode = BnMode::Infer);

// x: [N, C(+V), T, H, W] -> [N, 1] unbounded scores.
Tensor discriminate_batch(const ParamStore& store, const Tensor& x,
                          const DiscOptions& opts = {});

// Scores one clip; broadcasts the label voxel when the clip is labeled.
double discriminate(const ParamStore& store, const VideoClip& clip,
                    const DiscOptions& opts = {});

// Tiles one-hot labels [N, V] into constant channels over T x H x W and
// concatenates them onto the video batch.
Tensor attach_label_voxel(const Tensor& batch, const Tensor& labels);

// Latent-trajectory upsampling: output length factor*(T-1)+1, frames at
// multiples of factor reproduce generate_video's frames exactly.
VideoClip interpolate_frames(const ParamStore& store, const Tensor& z0,
                             int64_t factor,
                             std::optional<int64_t> label = std::nullopt);

// One entry per Lipschitz-relevant discriminator stage, in forward order.
struct DiscLayerRef {
  LayerKind kind;
  std::string param_name;  // weight for linear/conv, layer name for BN
  double leaky_slope = 0.2;
};
std::vector<DiscLayerRef> discriminator_layer_plan(const ModelConfig& config);

// Sample z0 ~ uniform(-1, 1)^{K0}.
Tensor sample_z0(const ModelConfig& config, int64_t n, Rng& rng);

// Checkpoint = directory with manifest.json + one TNSR file per parameter.
void save_checkpoint(const std::filesystem::path& dir, const ParamStore& store);
ParamStore load_checkpoint(const std::filesystem::path& dir);

nlohmann::json config_to_json(const ModelConfig& c);
ModelConfig config_from_json(const nlohmann::json& j);

}  // namespace tgan
