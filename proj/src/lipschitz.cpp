#include "tgan/lipschitz.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace tgan {

namespace {

constexpr double kJacobiTol = 1e-14;
constexpr int kMaxSweeps = 60;

void check_matrix(const Tensor& w, const char* op) {
  if (w.dim() != 2) throw ValueError(std::string(op) + ": rank-2 required");
  if (!w.all_finite())
    throw NumericalError(std::string(op) + ": non-finite input");
}

// One-sided Jacobi on a tall (m >= n) matrix: rotate column pairs until all
// are mutually orthogonal, then read off U, S from the columns and V from
// the accumulated rotations.
void jacobi_tall(Eigen::MatrixXd a, Eigen::MatrixXd& u, Eigen::VectorXd& s,
                 Eigen::MatrixXd& v) {
  const Eigen::Index m = a.rows(), n = a.cols();
  v = Eigen::MatrixXd::Identity(n, n);
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double alpha = a.col(i).squaredNorm();
        const double beta = a.col(j).squaredNorm();
        const double gamma = a.col(i).dot(a.col(j));
        if (std::abs(gamma) <= kJacobiTol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t =
            (zeta >= 0 ? 1.0 : -1.0) /
            (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double sn = c * t;
        for (Eigen::Index r = 0; r < m; ++r) {
          const double ai = a(r, i), aj = a(r, j);
          a(r, i) = c * ai - sn * aj;
          a(r, j) = sn * ai + c * aj;
        }
        for (Eigen::Index r = 0; r < n; ++r) {
          const double vi = v(r, i), vj = v(r, j);
          v(r, i) = c * vi - sn * vj;
          v(r, j) = sn * vi + c * vj;
        }
      }
    }
    if (!rotated) break;
  }

  s.resize(n);
  u.resize(m, n);
  for (Eigen::Index j = 0; j < n; ++j) s(j) = a.col(j).norm();

  // Sort descending.
  std::vector<Eigen::Index> order(static_cast<size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j) order[static_cast<size_t>(j)] = j;
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index x, Eigen::Index y) { return s(x) > s(y); });
  Eigen::MatrixXd a_sorted(m, n), v_sorted(n, n);
  Eigen::VectorXd s_sorted(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    a_sorted.col(j) = a.col(order[static_cast<size_t>(j)]);
    v_sorted.col(j) = v.col(order[static_cast<size_t>(j)]);
    s_sorted(j) = s(order[static_cast<size_t>(j)]);
  }
  s = s_sorted;
  v = v_sorted;

  const double sigma_max = s.size() ? s(0) : 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (s(j) > sigma_max * 1e-300 && s(j) > 0.0) {
      u.col(j) = a_sorted.col(j) / s(j);
    } else {
      // Rank-deficient column: complete U with any unit vector orthogonal
      // to the columns already placed.
      for (Eigen::Index cand = 0; cand < m; ++cand) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(m);
        e(cand) = 1.0;
        for (Eigen::Index p = 0; p < j; ++p)
          e -= u.col(p).dot(e) * u.col(p);
        const double norm = e.norm();
        if (norm > 0.5) {
          u.col(j) = e / norm;
          break;
        }
      }
      s(j) = 0.0;
    }
  }
}

Eigen::MatrixXd to_eigen(const Tensor& w) {
  Eigen::MatrixXd a(w.size(0), w.size(1));
  for (int64_t r = 0; r < w.size(0); ++r)
    for (int64_t c = 0; c < w.size(1); ++c) a(r, c) = w.at(r * w.size(1) + c);
  return a;
}

Tensor from_eigen(const Eigen::MatrixXd& a, DType dtype) {
  std::vector<double> data(static_cast<size_t>(a.rows() * a.cols()));
  for (Eigen::Index r = 0; r < a.rows(); ++r)
    for (Eigen::Index c = 0; c < a.cols(); ++c)
      data[static_cast<size_t>(r * a.cols() + c)] = a(r, c);
  return from_data({a.rows(), a.cols()}, std::move(data), dtype);
}

}  // namespace

SvdResult svd(const Tensor& w) {
  check_matrix(w, "svd");
  const Eigen::MatrixXd a = to_eigen(w);
  Eigen::MatrixXd u, v;
  Eigen::VectorXd s;
  if (a.rows() >= a.cols()) {
    jacobi_tall(a, u, s, v);
  } else {
    jacobi_tall(a.transpose(), v, s, u);  // W^T = V S U^T
  }
  SvdResult out;
  out.u = from_eigen(u, w.dtype());
  out.v = from_eigen(v, w.dtype());
  std::vector<double> sv(s.data(), s.data() + s.size());
  out.s = from_data({s.size()}, std::move(sv), w.dtype());
  return out;
}

double spectral_norm(const Tensor& w) {
  SvdResult r = svd(w);
  return r.s.numel() ? r.s.at(0) : 0.0;
}

PowerIterResult power_iteration(const Tensor& w, int max_iters, double tol,
                                uint64_t seed) {
  check_matrix(w, "power_iteration");
  const Eigen::MatrixXd a = to_eigen(w);
  double norm_check = a.norm();
  if (norm_check == 0.0)
    throw ValueError("power_iteration: zero matrix");
  Rng rng(derive_seed(seed, 0xb0));
  std::normal_distribution<double> dist(0.0, 1.0);
  Eigen::VectorXd v(a.cols());
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = dist(rng);
  v.normalize();

  PowerIterResult result;
  double sigma_prev = 0.0;
  for (int it = 1; it <= max_iters; ++it) {
    Eigen::VectorXd u = a * v;
    const double sigma = u.norm();
    result.iters = it;
    result.sigma = sigma;
    if (sigma == 0.0) {
      // Started orthogonal to the range; reseed.
      for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = dist(rng);
      v.normalize();
      continue;
    }
    v = a.transpose() * (u / sigma);
    const double vnorm = v.norm();
    if (vnorm == 0.0) break;
    v /= vnorm;
    if (std::abs(sigma - sigma_prev) < tol * std::max(1.0, sigma)) {
      result.converged = true;
      break;
    }
    sigma_prev = sigma;
  }
  return result;
}

Tensor clip_singular_values(const Tensor& w, double smax) {
  if (smax <= 0.0) throw ValueError("clip_singular_values: smax must be > 0");
  check_matrix(w, "clip_singular_values");
  SvdResult r = svd(w);
  bool any = false;
  for (double sv : r.s.data())
    if (sv > smax) {
      any = true;
      break;
    }
  if (!any) return w.detach();

  const int64_t m = w.size(0), n = w.size(1),
                rank = r.s.numel();
  Eigen::MatrixXd u(m, rank), v(n, rank);
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < rank; ++j) u(i, j) = r.u.at(i * rank + j);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < rank; ++j) v(i, j) = r.v.at(i * rank + j);
  Eigen::VectorXd s(rank);
  for (int64_t j = 0; j < rank; ++j) s(j) = std::min(r.s.at(j), smax);
  return from_eigen(u * s.asDiagonal() * v.transpose(), w.dtype());
}

Tensor matricize_conv(const Tensor& w) {
  if (w.dim() < 2)
    throw ValueError("matricize_conv: weight needs an output-channel axis");
  int64_t rest = 1;
  for (int64_t i = 1; i < w.dim(); ++i) rest *= w.size(i);
  return reshape(w.detach(), {w.size(0), rest});
}

Tensor dematricize_conv(const Tensor& m, const Shape& original_shape) {
  return reshape(m.detach(), original_shape);
}

void clip_bn_gamma(Tensor& gamma, const BnState& state) {
  if (gamma.numel() != state.channels())
    throw ValueError("clip_bn_gamma: channel mismatch");
  auto& g = gamma.mutable_data();
  for (size_t c = 0; c < g.size(); ++c) {
    const double sb = state.running_std[c];
    if (!std::isfinite(sb))
      throw NumericalError("clip_bn_gamma: non-finite running std");
    const double bound = std::sqrt(sb * sb + state.eps);
    const double sign = g[c] < 0.0 ? -1.0 : 1.0;
    const double mag = std::abs(g[c]);
    if (mag > bound)
      g[c] = sign * bound;
    else if (mag < 1e-8)
      g[c] = sign * 1e-8;  // keep "0 < gamma" strict
  }
}

ParamStore svc_apply(const ParamStore& params, const std::string& prefix) {
  ParamStore out = params.clone();
  for (auto& [name, t] : out.params) {
    if (name.rfind(prefix, 0) != 0) continue;
    auto kind_it = out.kinds.find(name);
    if (kind_it == out.kinds.end())
      throw ValueError("svc_apply: unknown layer kind for " + name);
    switch (kind_it->second) {
      case ParamKind::LinearWeight:
      case ParamKind::ConvWeight: {
        Tensor mat = matricize_conv(t);
        Tensor clipped = clip_singular_values(mat, 1.0);
        t = dematricize_conv(clipped, t.shape());
        break;
      }
      case ParamKind::BnGamma: {
        const std::string layer = name.substr(0, name.size() - 6);  // ".gamma"
        auto bn_it = out.bn.find(layer);
        if (bn_it == out.bn.end())
          throw ValueError("svc_apply: missing BN state for " + layer);
        clip_bn_gamma(t, bn_it->second);
        break;
      }
      case ParamKind::Bias:
      case ParamKind::BnBeta:
        break;  // Table 2: do nothing
    }
  }
  return out;
}

nlohmann::json LipschitzCertificate::to_json() const {
  nlohmann::json layer_arr = nlohmann::json::array();
  for (const auto& l : layers)
    layer_arr.push_back({{"name", l.name}, {"kind", l.kind}, {"k", l.k}});
  return nlohmann::json{
      {"layers", layer_arr}, {"k", k}, {"iteration", iteration}};
}

LipschitzCertificate compose_bound(const ParamStore& store, int64_t iteration) {
  LipschitzCertificate cert;
  cert.iteration = iteration;
  for (const auto& ref : discriminator_layer_plan(store.config)) {
    LipschitzCertificate::Layer layer;
    layer.kind = layer_kind_name(ref.kind);
    switch (ref.kind) {
      case LayerKind::Conv3d:
      case LayerKind::Linear:
        layer.name = ref.param_name;
        layer.k = spectral_norm(matricize_conv(store.at(ref.param_name)));
        break;
      case LayerKind::BatchNorm: {
        layer.name = ref.param_name;
        const auto& state = store.bn.at(ref.param_name);
        const Tensor& gamma = store.at(ref.param_name + ".gamma");
        double worst = 0.0;
        for (int64_t c = 0; c < gamma.numel(); ++c) {
          const double sb = state.running_std[static_cast<size_t>(c)];
          worst = std::max(
              worst, std::abs(gamma.at(c)) / std::sqrt(sb * sb + state.eps));
        }
        layer.k = worst;
        break;
      }
      case LayerKind::LeakyRelu:
        if (ref.leaky_slope > 1.0)
          throw ValueError("compose_bound: leaky slope > 1 is not 1-Lipschitz");
        layer.name = "leaky_relu";
        layer.k = 1.0;
        break;
      case LayerKind::Relu:
      case LayerKind::Tanh:
        layer.name = layer.kind;
        layer.k = 1.0;
        break;
      default:
        throw ValueError("compose_bound: unknown layer kind in plan");
    }
    cert.k *= layer.k;
    cert.layers.push_back(std::move(layer));
  }
  return cert;
}

double empirical_lipschitz(const std::function<double(const Tensor&)>& f,
                           const std::function<Tensor(Rng&)>& sampler,
                           int64_t n_pairs, Rng& rng) {
  if (n_pairs < 1) throw ValueError("empirical_lipschitz: n_pairs must be >= 1");
  double best = 0.0;
  for (int64_t i = 0; i < n_pairs; ++i) {
    Tensor x1 = sampler(rng);
    Tensor x2;
    if (i % 2 == 0) {
      x2 = sampler(rng);
    } else {
      // Local probe: x2 = x1 + delta with ||delta|| = 1e-3.
      Tensor delta = normal(x1.shape(), 0.0, 1.0, rng);
      double norm = 0.0;
      for (double v : delta.data()) norm += v * v;
      norm = std::sqrt(norm);
      if (norm == 0.0) continue;
      x2 = x1.clone();
      for (size_t j = 0; j < x2.data().size(); ++j)
        x2.mutable_data()[j] += delta.data()[j] * (1e-3 / norm);
    }
    double dist = 0.0;
    for (size_t j = 0; j < x1.data().size(); ++j) {
      const double d = x1.data()[j] - x2.data()[j];
      dist += d * d;
    }
    dist = std::sqrt(dist);
    if (dist == 0.0) continue;
    best = std::max(best, std::abs(f(x1) - f(x2)) / dist);
  }
  return best;
}

}  // namespace tgan
