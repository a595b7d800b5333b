#include "tgan/nn.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace tgan {

namespace {

using MatRM =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

void ensure_grad(TensorImpl& t) {
  if (t.grad.size() != t.data.size()) t.grad.assign(t.data.size(), 0.0);
}

// Gather/scatter geometry shared by conv (im2col on the input) and deconv
// (col2im on the output). "large" is the high-resolution side, "small" the
// strided side; small[i] == conv_out_size(large[i]).
struct ConvGeometry {
  std::vector<int64_t> large, small;
  int64_t kernel, stride, pad;
  int64_t prod_large = 1, prod_small = 1, prod_kernel = 1;
  // offset[kf * prod_small + m] = flat index into the large side, or -1
  // when the tap falls into the zero padding.
  std::vector<int64_t> offset;

  ConvGeometry(std::vector<int64_t> large_sizes, int64_t k, int64_t s,
               int64_t p)
      : large(std::move(large_sizes)), kernel(k), stride(s), pad(p) {
    const size_t rank = large.size();
    small.resize(rank);
    for (size_t i = 0; i < rank; ++i) {
      small[i] = conv_out_size(large[i], k, s, p);
      if (small[i] < 1)
        throw ValueError("convolution produces non-positive spatial size");
      prod_large *= large[i];
      prod_small *= small[i];
      prod_kernel *= kernel;
    }
    offset.assign(static_cast<size_t>(prod_kernel * prod_small), -1);
    std::vector<int64_t> kidx(rank, 0), midx(rank, 0);
    for (int64_t kf = 0; kf < prod_kernel; ++kf) {
      std::fill(midx.begin(), midx.end(), 0);
      for (int64_t m = 0; m < prod_small; ++m) {
        int64_t flat = 0;
        bool ok = true;
        for (size_t i = 0; i < rank; ++i) {
          const int64_t l = midx[i] * stride - pad + kidx[i];
          if (l < 0 || l >= large[i]) {
            ok = false;
            break;
          }
          flat = flat * large[i] + l;
        }
        if (ok) offset[static_cast<size_t>(kf * prod_small + m)] = flat;
        for (size_t i = rank; i-- > 0;) {
          if (++midx[i] < small[i]) break;
          midx[i] = 0;
        }
      }
      for (size_t i = rank; i-- > 0;) {
        if (++kidx[i] < kernel) break;
        kidx[i] = 0;
      }
    }
  }

  // src: [channels x prod_large] -> col: [channels*prod_kernel x prod_small]
  void im2col(const double* src, int64_t channels, double* col) const {
    for (int64_t c = 0; c < channels; ++c) {
      const double* s = src + c * prod_large;
      for (int64_t kf = 0; kf < prod_kernel; ++kf) {
        double* row = col + (c * prod_kernel + kf) * prod_small;
        const int64_t* off = offset.data() + kf * prod_small;
        for (int64_t m = 0; m < prod_small; ++m)
          row[m] = off[m] >= 0 ? s[off[m]] : 0.0;
      }
    }
  }

  // Adjoint of im2col: accumulates into dst [channels x prod_large].
  void col2im(const double* col, int64_t channels, double* dst) const {
    for (int64_t c = 0; c < channels; ++c) {
      double* d = dst + c * prod_large;
      for (int64_t kf = 0; kf < prod_kernel; ++kf) {
        const double* row = col + (c * prod_kernel + kf) * prod_small;
        const int64_t* off = offset.data() + kf * prod_small;
        for (int64_t m = 0; m < prod_small; ++m)
          if (off[m] >= 0) d[off[m]] += row[m];
      }
    }
  }
};

std::vector<int64_t> spatial_sizes(const Tensor& x) {
  std::vector<int64_t> s;
  for (int64_t i = 2; i < x.dim(); ++i) s.push_back(x.size(i));
  return s;
}

void check_conv_args(const Tensor& x, const Tensor& w,
                     const std::optional<Tensor>& bias, int64_t stride,
                     int64_t padding, const char* op) {
  if (x.dim() < 3 || x.dim() > 5)
    throw ValueError(std::string(op) + ": input must be [N, C, spatial...]");
  if (w.dim() != x.dim())
    throw ValueError(std::string(op) + ": weight rank must match input rank");
  if (w.size(1) != x.size(1))
    throw ValueError(std::string(op) + ": channel mismatch, input " +
                     shape_str(x.shape()) + " weight " + shape_str(w.shape()));
  for (int64_t i = 3; i < w.dim(); ++i)
    if (w.size(i) != w.size(2))
      throw ValueError(std::string(op) + ": kernel must be cubic");
  if (stride < 1 || padding < 0)
    throw ValueError(std::string(op) + ": invalid stride/padding");
  if (bias && (bias->dim() != 1 || bias->size(0) != w.size(0)))
    throw ValueError(std::string(op) + ": bias shape mismatch");
}

}  // namespace

std::string layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Linear: return "linear";
    case LayerKind::Deconv1d: return "deconv1d";
    case LayerKind::Deconv2d: return "deconv2d";
    case LayerKind::Conv3d: return "conv3d";
    case LayerKind::BatchNorm: return "batchnorm";
    case LayerKind::Relu: return "relu";
    case LayerKind::LeakyRelu: return "leaky_relu";
    case LayerKind::Tanh: return "tanh";
  }
  throw ValueError("unknown layer kind");
}

LayerKind layer_kind_from_name(const std::string& name) {
  for (LayerKind k :
       {LayerKind::Linear, LayerKind::Deconv1d, LayerKind::Deconv2d,
        LayerKind::Conv3d, LayerKind::BatchNorm, LayerKind::Relu,
        LayerKind::LeakyRelu, LayerKind::Tanh})
    if (layer_kind_name(k) == name) return k;
  throw ValueError("unknown layer kind: " + name);
}

void LayerSpec::validate() const {
  if (kernel < 1 || stride < 1) throw ValueError("kernel and stride must be >= 1");
  if (padding < 0) throw ValueError("padding must be >= 0");
  if (kind == LayerKind::LeakyRelu &&
      (leaky_slope <= 0.0 || leaky_slope > 1.0))
    throw ValueError("leaky_relu slope must be in (0, 1]");
  if (bn_eps <= 0.0) throw ValueError("bn_eps must be positive");
}

Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.dim() != 2 || w.dim() != 2 || b.dim() != 1)
    throw ValueError("linear: expected x [N,in], w [out,in], b [out]");
  const int64_t n = x.size(0), in = x.size(1), out = w.size(0);
  if (w.size(1) != in || b.size(0) != out)
    throw ValueError("linear: shape mismatch x " + shape_str(x.shape()) +
                     " w " + shape_str(w.shape()));
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = {n, out};
  impl->dtype = x.dtype();
  impl->data.resize(static_cast<size_t>(n * out));
  {
    CMapRM X(x.data().data(), n, in), W(w.data().data(), out, in);
    MapRM Y(impl->data.data(), n, out);
    Y.noalias() = X * W.transpose();
    for (int64_t r = 0; r < n; ++r)
      for (int64_t c = 0; c < out; ++c) Y(r, c) += b.data()[c];
  }
  auto px = x.impl(), pw = w.impl(), pb = b.impl();
  Tensor result(std::move(impl));
  if (x.requires_grad() || w.requires_grad() || b.requires_grad()) {
    result.raw()->requires_grad = true;
    result.raw()->parents = {x, w, b};
    result.raw()->backward_fn = [px, pw, pb, n, in,
                                 out](const TensorImpl& self) {
      CMapRM G(self.grad.data(), n, out);
      if (px->requires_grad) {
        ensure_grad(*px);
        CMapRM W(pw->data.data(), out, in);
        MapRM dX(px->grad.data(), n, in);
        dX.noalias() += G * W;
      }
      if (pw->requires_grad) {
        ensure_grad(*pw);
        CMapRM X(px->data.data(), n, in);
        MapRM dW(pw->grad.data(), out, in);
        dW.noalias() += G.transpose() * X;
      }
      if (pb->requires_grad) {
        ensure_grad(*pb);
        for (int64_t c = 0; c < out; ++c)
          for (int64_t r = 0; r < n; ++r) pb->grad[c] += G(r, c);
      }
    };
  }
  return result;
}

Tensor conv_forward(const Tensor& x, const Tensor& w,
                    const std::optional<Tensor>& bias, int64_t stride,
                    int64_t padding) {
  check_conv_args(x, w, bias, stride, padding, "conv");
  const int64_t batch = x.size(0), ci = x.size(1), co = w.size(0),
                k = w.size(2);
  auto geo = std::make_shared<ConvGeometry>(spatial_sizes(x), k, stride,
                                            padding);
  Shape out_shape = {batch, co};
  for (int64_t e : geo->small) out_shape.push_back(e);

  const int64_t cik = ci * geo->prod_kernel;
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = out_shape;
  impl->dtype = x.dtype();
  impl->data.resize(static_cast<size_t>(numel(out_shape)));

  std::vector<double> col(static_cast<size_t>(cik * geo->prod_small));
  CMapRM W(w.data().data(), co, cik);
  for (int64_t b = 0; b < batch; ++b) {
    geo->im2col(x.data().data() + b * ci * geo->prod_large, ci, col.data());
    CMapRM C(col.data(), cik, geo->prod_small);
    MapRM Y(impl->data.data() + b * co * geo->prod_small, co, geo->prod_small);
    Y.noalias() = W * C;
    if (bias)
      for (int64_t c = 0; c < co; ++c)
        Y.row(c).array() += bias->data()[static_cast<size_t>(c)];
  }

  auto px = x.impl(), pw = w.impl();
  std::shared_ptr<TensorImpl> pbias = bias ? bias->impl() : nullptr;
  Tensor result(std::move(impl));
  const bool needs = x.requires_grad() || w.requires_grad() ||
                     (bias && bias->requires_grad());
  if (needs) {
    result.raw()->requires_grad = true;
    result.raw()->parents = {x, w};
    if (bias) result.raw()->parents.push_back(*bias);
    result.raw()->backward_fn = [px, pw, pbias, geo, batch, ci, co,
                                 cik](const TensorImpl& self) {
      std::vector<double> col(static_cast<size_t>(cik * geo->prod_small));
      std::vector<double> dcol;
      for (int64_t b = 0; b < batch; ++b) {
        CMapRM G(self.grad.data() + b * co * geo->prod_small, co,
                 geo->prod_small);
        if (pw->requires_grad) {
          geo->im2col(px->data.data() + b * ci * geo->prod_large, ci,
                      col.data());
          ensure_grad(*pw);
          CMapRM C(col.data(), cik, geo->prod_small);
          MapRM dW(pw->grad.data(), co, cik);
          dW.noalias() += G * C.transpose();
        }
        if (px->requires_grad) {
          ensure_grad(*px);
          dcol.resize(static_cast<size_t>(cik * geo->prod_small));
          CMapRM W(pw->data.data(), co, cik);
          MapRM DC(dcol.data(), cik, geo->prod_small);
          DC.noalias() = W.transpose() * G;
          geo->col2im(dcol.data(), ci,
                      px->grad.data() + b * ci * geo->prod_large);
        }
        if (pbias && pbias->requires_grad) {
          ensure_grad(*pbias);
          for (int64_t c = 0; c < co; ++c)
            pbias->grad[static_cast<size_t>(c)] += G.row(c).sum();
        }
      }
    };
  }
  return result;
}

Tensor deconv_forward(const Tensor& x, const Tensor& w,
                      const std::optional<Tensor>& bias, int64_t stride,
                      int64_t padding) {
  check_conv_args(x, w, bias, stride, padding, "deconv");
  const int64_t batch = x.size(0), ci = x.size(1), co = w.size(0),
                k = w.size(2);
  std::vector<int64_t> out_sizes;
  for (int64_t sz : spatial_sizes(x)) {
    const int64_t o = deconv_out_size(sz, k, stride, padding);
    if (o < 1) throw ValueError("deconv produces non-positive spatial size");
    out_sizes.push_back(o);
  }
  // The output plays the "large" side of the matching convolution; the input
  // positions coincide with that convolution's output positions.
  auto geo =
      std::make_shared<ConvGeometry>(out_sizes, k, stride, padding);
  for (size_t i = 0; i < out_sizes.size(); ++i)
    if (geo->small[i] != spatial_sizes(x)[i])
      throw ValueError("deconv geometry inconsistency");

  // Permuted weight: rows indexed by (co, kernel offset), columns by ci.
  const int64_t cok = co * geo->prod_kernel;
  std::vector<double> wperm(static_cast<size_t>(cok * ci));
  {
    const auto& wd = w.data();
    for (int64_t c = 0; c < co; ++c)
      for (int64_t i = 0; i < ci; ++i)
        for (int64_t kf = 0; kf < geo->prod_kernel; ++kf)
          wperm[(c * geo->prod_kernel + kf) * ci + i] =
              wd[(c * ci + i) * geo->prod_kernel + kf];
  }

  Shape out_shape = {batch, co};
  for (int64_t e : out_sizes) out_shape.push_back(e);
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = out_shape;
  impl->dtype = x.dtype();
  impl->data.assign(static_cast<size_t>(numel(out_shape)), 0.0);

  std::vector<double> col(static_cast<size_t>(cok * geo->prod_small));
  {
    CMapRM WP(wperm.data(), cok, ci);
    for (int64_t b = 0; b < batch; ++b) {
      CMapRM X(x.data().data() + b * ci * geo->prod_small, ci,
               geo->prod_small);
      MapRM C(col.data(), cok, geo->prod_small);
      C.noalias() = WP * X;
      double* out = impl->data.data() + b * co * geo->prod_large;
      geo->col2im(col.data(), co, out);
      if (bias)
        for (int64_t c = 0; c < co; ++c)
          for (int64_t m = 0; m < geo->prod_large; ++m)
            out[c * geo->prod_large + m] +=
                bias->data()[static_cast<size_t>(c)];
    }
  }

  auto px = x.impl(), pw = w.impl();
  std::shared_ptr<TensorImpl> pbias = bias ? bias->impl() : nullptr;
  Tensor result(std::move(impl));
  const bool needs = x.requires_grad() || w.requires_grad() ||
                     (bias && bias->requires_grad());
  if (needs) {
    result.raw()->requires_grad = true;
    result.raw()->parents = {x, w};
    if (bias) result.raw()->parents.push_back(*bias);
    result.raw()->backward_fn = [px, pw, pbias, geo, batch, ci, co,
                                 cok](const TensorImpl& self) {
      std::vector<double> colg(static_cast<size_t>(cok * geo->prod_small));
      std::vector<double> dwperm;
      if (pw->requires_grad)
        dwperm.assign(static_cast<size_t>(cok * ci), 0.0);
      std::vector<double> wperm;
      if (px->requires_grad) {
        wperm.resize(static_cast<size_t>(cok * ci));
        const auto& wd = pw->data;
        for (int64_t c = 0; c < co; ++c)
          for (int64_t i = 0; i < ci; ++i)
            for (int64_t kf = 0; kf < geo->prod_kernel; ++kf)
              wperm[(c * geo->prod_kernel + kf) * ci + i] =
                  wd[(c * ci + i) * geo->prod_kernel + kf];
      }
      for (int64_t b = 0; b < batch; ++b) {
        // Gather the output gradient back onto the strided grid.
        geo->im2col(self.grad.data() + b * co * geo->prod_large, co,
                    colg.data());
        CMapRM CG(colg.data(), cok, geo->prod_small);
        if (px->requires_grad) {
          ensure_grad(*px);
          CMapRM WP(wperm.data(), cok, ci);
          MapRM dX(px->grad.data() + b * ci * geo->prod_small, ci,
                   geo->prod_small);
          dX.noalias() += WP.transpose() * CG;
        }
        if (pw->requires_grad) {
          CMapRM X(px->data.data() + b * ci * geo->prod_small, ci,
                   geo->prod_small);
          MapRM DWP(dwperm.data(), cok, ci);
          DWP.noalias() += CG * X.transpose();
        }
        if (pbias && pbias->requires_grad) {
          ensure_grad(*pbias);
          const double* g = self.grad.data() + b * co * geo->prod_large;
          for (int64_t c = 0; c < co; ++c)
            for (int64_t m = 0; m < geo->prod_large; ++m)
              pbias->grad[static_cast<size_t>(c)] +=
                  g[c * geo->prod_large + m];
        }
      }
      if (pw->requires_grad) {
        ensure_grad(*pw);
        for (int64_t c = 0; c < co; ++c)
          for (int64_t i = 0; i < ci; ++i)
            for (int64_t kf = 0; kf < geo->prod_kernel; ++kf)
              pw->grad[(c * ci + i) * geo->prod_kernel + kf] +=
                  dwperm[(c * geo->prod_kernel + kf) * ci + i];
      }
    };
  }
  return result;
}

Tensor batchnorm_forward(const Tensor& x, const Tensor& gamma,
                         const Tensor& beta, BnState& state, BnMode mode) {
  if (x.dim() < 2) throw ValueError("batchnorm: input must be [N, C, ...]");
  const int64_t n = x.size(0), c = x.size(1);
  int64_t rest = 1;
  for (int64_t i = 2; i < x.dim(); ++i) rest *= x.size(i);
  if (gamma.numel() != c || beta.numel() != c)
    throw ValueError("batchnorm: gamma/beta must have one entry per channel");
  if (state.channels() != c)
    throw ValueError("batchnorm: running statistics channel mismatch");
  if (mode == BnMode::Train && n < 2)
    throw ValueError("batchnorm: train mode requires batch size >= 2");

  const double eps = state.eps;
  const int64_t m_count = n * rest;
  std::vector<double> mu(static_cast<size_t>(c), 0.0),
      stdb(static_cast<size_t>(c), 0.0);
  const auto& xd = x.data();

  if (mode == BnMode::Train) {
    for (int64_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (int64_t b = 0; b < n; ++b)
        for (int64_t r = 0; r < rest; ++r) s += xd[(b * c + ch) * rest + r];
      mu[ch] = s / static_cast<double>(m_count);
      double v = 0.0;
      for (int64_t b = 0; b < n; ++b)
        for (int64_t r = 0; r < rest; ++r) {
          const double d = xd[(b * c + ch) * rest + r] - mu[ch];
          v += d * d;
        }
      stdb[ch] = std::sqrt(v / static_cast<double>(m_count) + eps);
      const double mom = state.momentum;
      state.running_mean[ch] = mom * state.running_mean[ch] + (1 - mom) * mu[ch];
      state.running_std[ch] =
          mom * state.running_std[ch] +
          (1 - mom) * std::sqrt(v / static_cast<double>(m_count));
    }
  } else {
    for (int64_t ch = 0; ch < c; ++ch) {
      mu[ch] = state.running_mean[ch];
      stdb[ch] = std::sqrt(state.running_std[ch] * state.running_std[ch] + eps);
    }
  }

  auto impl = std::make_shared<TensorImpl>();
  impl->shape = x.shape();
  impl->dtype = x.dtype();
  impl->data.resize(xd.size());
  const auto& gd = gamma.data();
  const auto& bd = beta.data();
  for (int64_t b = 0; b < n; ++b)
    for (int64_t ch = 0; ch < c; ++ch)
      for (int64_t r = 0; r < rest; ++r) {
        const size_t i = static_cast<size_t>((b * c + ch) * rest + r);
        impl->data[i] = gd[ch] * (xd[i] - mu[ch]) / stdb[ch] + bd[ch];
      }

  auto px = x.impl(), pg = gamma.impl(), pb = beta.impl();
  Tensor result(std::move(impl));
  if (!(x.requires_grad() || gamma.requires_grad() || beta.requires_grad()))
    return result;

  result.raw()->requires_grad = true;
  result.raw()->parents = {x, gamma, beta};
  const bool train = mode == BnMode::Train;
  result.raw()->backward_fn = [px, pg, pb, mu, stdb, n, c, rest,
                               train](const TensorImpl& self) {
    const int64_t m_count = n * rest;
    const auto& xd = px->data;
    for (int64_t ch = 0; ch < c; ++ch) {
      const double g_ch = pg->data[static_cast<size_t>(ch)];
      double sum_g = 0.0, sum_gx = 0.0;
      for (int64_t b = 0; b < n; ++b)
        for (int64_t r = 0; r < rest; ++r) {
          const size_t i = static_cast<size_t>((b * c + ch) * rest + r);
          const double xhat = (xd[i] - mu[ch]) / stdb[ch];
          sum_g += self.grad[i];
          sum_gx += self.grad[i] * xhat;
        }
      if (pg->requires_grad) {
        ensure_grad(*pg);
        pg->grad[static_cast<size_t>(ch)] += sum_gx;
      }
      if (pb->requires_grad) {
        ensure_grad(*pb);
        pb->grad[static_cast<size_t>(ch)] += sum_g;
      }
      if (px->requires_grad) {
        ensure_grad(*px);
        for (int64_t b = 0; b < n; ++b)
          for (int64_t r = 0; r < rest; ++r) {
            const size_t i = static_cast<size_t>((b * c + ch) * rest + r);
            if (train) {
              const double xhat = (xd[i] - mu[ch]) / stdb[ch];
              px->grad[i] +=
                  g_ch / stdb[ch] *
                  (self.grad[i] - sum_g / static_cast<double>(m_count) -
                   xhat * sum_gx / static_cast<double>(m_count));
            } else {
              px->grad[i] += g_ch / stdb[ch] * self.grad[i];
            }
          }
      }
    }
  };
  return result;
}

Tensor activation(const Tensor& x, LayerKind kind, double leaky_slope) {
  switch (kind) {
    case LayerKind::Relu: return relu(x);
    case LayerKind::LeakyRelu:
      if (leaky_slope <= 0.0 || leaky_slope > 1.0)
        throw ValueError("leaky_relu slope must be in (0, 1]");
      return leaky_relu(x, leaky_slope);
    case LayerKind::Tanh: return tanh_op(x);
    default: throw ValueError("activation: not an activation kind");
  }
}

}  // namespace tgan
