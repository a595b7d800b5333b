#pragma once

#include <array>
#include <optional>

#include "tgan/tensor.hpp"

namespace tgan {

enum class LayerKind {
  Linear,
  Deconv1d,
  Deconv2d,
  Conv3d,
  BatchNorm,
  Relu,
  LeakyRelu,
  Tanh,
};

std::string layer_kind_name(LayerKind k);
LayerKind layer_kind_from_name(const std::string& name);

// Declarative layer description. Kernel/stride/padding apply per spatial
// axis (cubic kernels only, matching the network tables).
struct LayerSpec {
  LayerKind kind = LayerKind::Linear;
  int64_t kernel = 1;
  int64_t out_channels = 0;
  int64_t padding = 0;
  int64_t stride = 1;
  double leaky_slope = 0.2;
  double bn_eps = 1e-5;
  double bn_momentum = 0.9;

  void validate() const;
};

// Batch-norm running statistics, tracked outside the tape. running_std is
// the EMA of the per-batch standard deviation (sigma_B).
struct BnState {
  std::vector<double> running_mean;
  std::vector<double> running_std;
  double momentum = 0.9;
  double eps = 1e-5;

  explicit BnState(int64_t channels = 0, double momentum = 0.9,
                   double eps = 1e-5)
      : running_mean(static_cast<size_t>(channels), 0.0),
        running_std(static_cast<size_t>(channels), 1.0),
        momentum(momentum),
        eps(eps) {}
  int64_t channels() const {
    return static_cast<int64_t>(running_mean.size());
  }
};

enum class BnMode { Train, Infer };

// Size rules.
inline int64_t conv_out_size(int64_t in, int64_t k, int64_t s, int64_t p) {
  return (in + 2 * p - k) / s + 1;
}
inline int64_t deconv_out_size(int64_t in, int64_t k, int64_t s, int64_t p) {
  return (in - 1) * s - 2 * p + k;
}

// x: [N, in], w: [out, in], b: [out]. Returns x w^T + b.
Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor& b);

// Strided cross-correlation. x: [N, Ci, S...], w: [Co, Ci, K...],
// optional bias [Co]. Spatial rank = x.dim() - 2 (1, 2 or 3).
Tensor conv_forward(const Tensor& x, const Tensor& w,
                    const std::optional<Tensor>& bias, int64_t stride,
                    int64_t padding);

// Transposed convolution: the exact adjoint of conv_forward with the same
// (w, stride, padding). x: [N, Ci, S...], w: [Co, Ci, K...].
Tensor deconv_forward(const Tensor& x, const Tensor& w,
                      const std::optional<Tensor>& bias, int64_t stride,
                      int64_t padding);

// x: [N, C, ...] with channel axis 1 (a [N, F] tensor is treated as F
// channels). Train mode normalizes with batch statistics and updates the
// running EMA; infer mode uses the running statistics.
Tensor batchnorm_forward(const Tensor& x, const Tensor& gamma,
                         const Tensor& beta, BnState& state, BnMode mode);

Tensor activation(const Tensor& x, LayerKind kind, double leaky_slope = 0.2);

}  // namespace tgan
