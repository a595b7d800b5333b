#pragma once

#include "tgan/models.hpp"

namespace tgan {

// Thin SVD W = U diag(S) V^T with orthonormal columns and S descending.
struct SvdResult {
  Tensor u;  // m x r
  Tensor s;  // r, descending, >= 0
  Tensor v;  // n x r
};

// One-sided Jacobi on the smaller-dimension side, f64 accumulation.
SvdResult svd(const Tensor& w);

// Largest singular value via the SVD path.
double spectral_norm(const Tensor& w);

struct PowerIterResult {
  double sigma = 0.0;
  bool converged = false;
  int iters = 0;
};

// Independent sigma_max oracle: alternating W / W^T applications.
PowerIterResult power_iteration(const Tensor& w, int max_iters = 1000,
                                double tol = 1e-12, uint64_t seed = 0);

// U diag(min(S, smax)) V^T; returns the input unchanged when no singular
// value exceeds smax.
Tensor clip_singular_values(const Tensor& w, double smax = 1.0);

// out_channels x (everything else) flattening; exact inverse via reshape.
Tensor matricize_conv(const Tensor& w);
Tensor dematricize_conv(const Tensor& m, const Shape& original_shape);

// Per channel: clamp |gamma| into [1e-8, sqrt(sigma_B^2 + eps)], keeping
// the sign. Channels already inside the bound are untouched.
void clip_bn_gamma(Tensor& gamma, const BnState& state);

// Singular Value Clipping over every parameter under `prefix`: linear and
// conv weights are clipped through their matricization, BN gammas clamped,
// biases/betas/activations untouched. Pure: returns a new store.
ParamStore svc_apply(const ParamStore& params, const std::string& prefix = "d.");

struct LipschitzCertificate {
  struct Layer {
    std::string name;
    std::string kind;
    double k = 1.0;
  };
  std::vector<Layer> layers;
  double k = 1.0;  // product of per-layer constants
  int64_t iteration = -1;

  nlohmann::json to_json() const;
};

// Product bound over the discriminator stack: sigma_max for linear/conv,
// max_c |gamma_c| / sqrt(sigma_B_c^2 + eps) for BN (infer statistics), 1 for
// the activations.
LipschitzCertificate compose_bound(const ParamStore& store,
                                   int64_t iteration = -1);

// Max slope over sampled pairs; a lower bound on the true constant.
// Alternates independent pairs with local perturbation pairs of norm 1e-3.
double empirical_lipschitz(const std::function<double(const Tensor&)>& f,
                           const std::function<Tensor(Rng&)>& sampler,
                           int64_t n_pairs, Rng& rng);

}  // namespace tgan
