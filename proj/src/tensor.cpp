#include "tgan/tensor.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace tgan {

namespace {

using MatRM =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

std::shared_ptr<TensorImpl> alloc(const Shape& shape, DType dtype) {
  check_shape(shape);
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = shape;
  impl->dtype = dtype;
  impl->data.assign(static_cast<size_t>(numel(shape)), 0.0);
  return impl;
}

void ensure_grad(TensorImpl& t) {
  if (t.grad.size() != t.data.size()) t.grad.assign(t.data.size(), 0.0);
}

bool any_requires_grad(const std::vector<Tensor>& ts) {
  for (const auto& t : ts)
    if (t.requires_grad()) return true;
  return false;
}

// Creates the result node; the tape edge is recorded only when some input
// participates in differentiation.
Tensor make_node(std::shared_ptr<TensorImpl> impl, std::vector<Tensor> parents,
                 std::function<void(const TensorImpl&)> backward_fn) {
  if (any_requires_grad(parents)) {
    impl->requires_grad = true;
    impl->parents = std::move(parents);
    impl->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(impl));
}

void quantize_if_f32(TensorImpl& t) {
  if (t.dtype == DType::f32)
    for (double& v : t.data) v = static_cast<double>(static_cast<float>(v));
}

std::vector<int64_t> row_major_strides(const Shape& s) {
  std::vector<int64_t> st(s.size());
  int64_t acc = 1;
  for (size_t i = s.size(); i-- > 0;) {
    st[i] = acc;
    acc *= s[i];
  }
  return st;
}

}  // namespace

// --- Tensor methods ---------------------------------------------------------

const Shape& Tensor::shape() const { return impl_->shape; }

int64_t Tensor::size(int64_t axis) const {
  const auto& s = shape();
  if (axis < 0 || axis >= static_cast<int64_t>(s.size()))
    throw ValueError("axis out of range");
  return s[static_cast<size_t>(axis)];
}

int64_t Tensor::numel() const { return tgan::numel(impl_->shape); }
DType Tensor::dtype() const { return impl_->dtype; }
const std::vector<double>& Tensor::data() const { return impl_->data; }
std::vector<double>& Tensor::mutable_data() { return impl_->data; }
bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool value) {
  impl_->requires_grad = value;
  return *this;
}

bool Tensor::has_grad() const {
  return impl_ && impl_->grad.size() == impl_->data.size();
}

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) throw ValueError("tensor has no gradient");
  return impl_->grad;
}

void Tensor::zero_grad() { impl_->grad.assign(impl_->data.size(), 0.0); }

double Tensor::item() const {
  if (numel() != 1) throw ValueError("item() requires a scalar tensor");
  return impl_->data[0];
}

double Tensor::at(int64_t flat_index) const {
  return impl_->data.at(static_cast<size_t>(flat_index));
}

Tensor Tensor::detach() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->dtype = impl_->dtype;
  impl->data = impl_->data;
  return Tensor(std::move(impl));
}

Tensor Tensor::clone() const { return detach(); }

bool Tensor::all_finite() const {
  for (double v : impl_->data)
    if (!std::isfinite(v)) return false;
  return true;
}

// --- construction -----------------------------------------------------------

Tensor zeros(const Shape& shape, DType dtype) {
  return Tensor(alloc(shape, dtype));
}

Tensor ones(const Shape& shape, DType dtype) { return full(shape, 1.0, dtype); }

Tensor full(const Shape& shape, double value, DType dtype) {
  auto impl = alloc(shape, dtype);
  std::fill(impl->data.begin(), impl->data.end(), value);
  quantize_if_f32(*impl);
  return Tensor(std::move(impl));
}

Tensor from_data(const Shape& shape, std::vector<double> values, DType dtype) {
  check_shape(shape);
  if (static_cast<int64_t>(values.size()) != numel(shape))
    throw ValueError("from_data: value count does not match shape " +
                     shape_str(shape));
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = shape;
  impl->dtype = dtype;
  impl->data = std::move(values);
  quantize_if_f32(*impl);
  return Tensor(std::move(impl));
}

Tensor uniform(const Shape& shape, double lo, double hi, Rng& rng,
               DType dtype) {
  if (lo > hi) throw ValueError("uniform: lo > hi");
  auto impl = alloc(shape, dtype);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : impl->data) v = dist(rng);
  quantize_if_f32(*impl);
  return Tensor(std::move(impl));
}

Tensor normal(const Shape& shape, double mu, double sigma, Rng& rng,
              DType dtype) {
  if (sigma < 0) throw ValueError("normal: sigma < 0");
  auto impl = alloc(shape, dtype);
  std::normal_distribution<double> dist(mu, sigma);
  for (double& v : impl->data) v = dist(rng);
  quantize_if_f32(*impl);
  return Tensor(std::move(impl));
}

Tensor he_normal(const Shape& shape, Rng& rng, DType dtype) {
  check_shape(shape);
  int64_t fan_in = 1;
  for (size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
  if (shape.size() == 1) fan_in = shape[0];
  return normal(shape, 0.0, std::sqrt(2.0 / static_cast<double>(fan_in)), rng,
                dtype);
}

Tensor create(const Shape& shape, const Init& init, uint64_t seed,
              DType dtype) {
  Rng rng(seed);
  switch (init.kind) {
    case Init::Zeros:
      return zeros(shape, dtype);
    case Init::Ones:
      return ones(shape, dtype);
    case Init::Constant:
      return full(shape, init.a, dtype);
    case Init::Uniform:
      return uniform(shape, init.a, init.b, rng, dtype);
    case Init::Normal:
      return normal(shape, init.a, init.b, rng, dtype);
    case Init::HeNormal:
      return he_normal(shape, rng, dtype);
  }
  throw ValueError("create: unknown init kind");
}

// --- elementwise ------------------------------------------------------------

static void check_same_shape(const Tensor& a, const Tensor& b,
                             const char* op) {
  if (a.shape() != b.shape())
    throw ValueError(std::string(op) + ": shape mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  auto impl = alloc(a.shape(), a.dtype());
  const auto& da = a.data();
  const auto& db = b.data();
  for (size_t i = 0; i < impl->data.size(); ++i) impl->data[i] = da[i] + db[i];
  auto pa = a.impl(), pb = b.impl();
  return make_node(std::move(impl), {a, b}, [pa, pb](const TensorImpl& self) {
    if (pa->requires_grad) {
      ensure_grad(*pa);
      for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
    }
    if (pb->requires_grad) {
      ensure_grad(*pb);
      for (size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  auto impl = alloc(a.shape(), a.dtype());
  const auto& da = a.data();
  const auto& db = b.data();
  for (size_t i = 0; i < impl->data.size(); ++i) impl->data[i] = da[i] - db[i];
  auto pa = a.impl(), pb = b.impl();
  return make_node(std::move(impl), {a, b}, [pa, pb](const TensorImpl& self) {
    if (pa->requires_grad) {
      ensure_grad(*pa);
      for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
    }
    if (pb->requires_grad) {
      ensure_grad(*pb);
      for (size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  auto impl = alloc(a.shape(), a.dtype());
  const auto& da = a.data();
  const auto& db = b.data();
  for (size_t i = 0; i < impl->data.size(); ++i) impl->data[i] = da[i] * db[i];
  auto pa = a.impl(), pb = b.impl();
  return make_node(std::move(impl), {a, b}, [pa, pb](const TensorImpl& self) {
    if (pa->requires_grad) {
      ensure_grad(*pa);
      for (size_t i = 0; i < self.grad.size(); ++i)
        pa->grad[i] += self.grad[i] * pb->data[i];
    }
    if (pb->requires_grad) {
      ensure_grad(*pb);
      for (size_t i = 0; i < self.grad.size(); ++i)
        pb->grad[i] += self.grad[i] * pa->data[i];
    }
  });
}

Tensor scale(const Tensor& a, double c) {
  auto impl = alloc(a.shape(), a.dtype());
  const auto& da = a.data();
  for (size_t i = 0; i < impl->data.size(); ++i) impl->data[i] = da[i] * c;
  auto pa = a.impl();
  return make_node(std::move(impl), {a}, [pa, c](const TensorImpl& self) {
    ensure_grad(*pa);
    for (size_t i = 0; i < self.grad.size(); ++i)
      pa->grad[i] += self.grad[i] * c;
  });
}

Tensor add_scalar(const Tensor& a, double c) {
  auto impl = alloc(a.shape(), a.dtype());
  const auto& da = a.data();
  for (size_t i = 0; i < impl->data.size(); ++i) impl->data[i] = da[i] + c;
  auto pa = a.impl();
  return make_node(std::move(impl), {a}, [pa](const TensorImpl& self) {
    ensure_grad(*pa);
    for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
  });
}

// --- matmul -----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.dim() != 2 || b.dim() != 2) throw ValueError("matmul: rank-2 required");
  const int64_t m = a.size(0), k = a.size(1), k2 = b.size(0), n = b.size(1);
  if (k != k2)
    throw ValueError("matmul: inner dimension mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  auto impl = alloc({m, n}, a.dtype());
  {
    CMapRM A(a.data().data(), m, k), B(b.data().data(), k, n);
    MapRM C(impl->data.data(), m, n);
    C.noalias() = A * B;
  }
  auto pa = a.impl(), pb = b.impl();
  return make_node(
      std::move(impl), {a, b}, [pa, pb, m, k, n](const TensorImpl& self) {
        CMapRM G(self.grad.data(), m, n);
        if (pa->requires_grad) {
          ensure_grad(*pa);
          CMapRM B(pb->data.data(), k, n);
          MapRM dA(pa->grad.data(), m, k);
          dA.noalias() += G * B.transpose();
        }
        if (pb->requires_grad) {
          ensure_grad(*pb);
          CMapRM A(pa->data.data(), m, k);
          MapRM dB(pb->grad.data(), k, n);
          dB.noalias() += A.transpose() * G;
        }
      });
}

// --- shape ops --------------------------------------------------------------

Tensor reshape(const Tensor& a, const Shape& shape) {
  check_shape(shape);
  if (numel(shape) != a.numel())
    throw ValueError("reshape: element count mismatch " +
                     shape_str(a.shape()) + " -> " + shape_str(shape));
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = shape;
  impl->dtype = a.dtype();
  impl->data = a.data();
  auto pa = a.impl();
  return make_node(std::move(impl), {a}, [pa](const TensorImpl& self) {
    ensure_grad(*pa);
    for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
  });
}

Tensor permute(const Tensor& a, const std::vector<int64_t>& perm) {
  const auto& s = a.shape();
  if (perm.size() != s.size()) throw ValueError("permute: rank mismatch");
  std::vector<bool> seen(perm.size(), false);
  Shape out_shape(perm.size());
  for (size_t i = 0; i < perm.size(); ++i) {
    int64_t p = perm[i];
    if (p < 0 || p >= static_cast<int64_t>(s.size()) || seen[p])
      throw ValueError("permute: invalid permutation");
    seen[p] = true;
    out_shape[i] = s[static_cast<size_t>(p)];
  }
  auto in_strides = row_major_strides(s);
  auto impl = alloc(out_shape, a.dtype());
  const auto out_strides = row_major_strides(out_shape);
  const int64_t n = a.numel();
  // out[idx] = in[perm(idx)]; build the source stride per output axis.
  std::vector<int64_t> src_stride(perm.size());
  for (size_t i = 0; i < perm.size(); ++i)
    src_stride[i] = in_strides[static_cast<size_t>(perm[i])];
  const auto& din = a.data();
  std::vector<int64_t> idx(perm.size(), 0);
  for (int64_t o = 0; o < n; ++o) {
    int64_t src = 0;
    for (size_t i = 0; i < perm.size(); ++i) src += idx[i] * src_stride[i];
    impl->data[static_cast<size_t>(o)] = din[static_cast<size_t>(src)];
    for (size_t i = perm.size(); i-- > 0;) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  auto pa = a.impl();
  auto shape_copy = out_shape;
  auto stride_copy = src_stride;
  return make_node(std::move(impl), {a},
                   [pa, shape_copy, stride_copy](const TensorImpl& self) {
                     ensure_grad(*pa);
                     std::vector<int64_t> idx(shape_copy.size(), 0);
                     const int64_t n = static_cast<int64_t>(self.grad.size());
                     for (int64_t o = 0; o < n; ++o) {
                       int64_t src = 0;
                       for (size_t i = 0; i < shape_copy.size(); ++i)
                         src += idx[i] * stride_copy[i];
                       pa->grad[static_cast<size_t>(src)] +=
                           self.grad[static_cast<size_t>(o)];
                       for (size_t i = shape_copy.size(); i-- > 0;) {
                         if (++idx[i] < shape_copy[i]) break;
                         idx[i] = 0;
                       }
                     }
                   });
}

Tensor concat(const Tensor& a, const Tensor& b, int64_t axis) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa.size() != sb.size()) throw ValueError("concat: rank mismatch");
  if (axis < 0 || axis >= static_cast<int64_t>(sa.size()))
    throw ValueError("concat: axis out of range");
  for (size_t i = 0; i < sa.size(); ++i)
    if (static_cast<int64_t>(i) != axis && sa[i] != sb[i])
      throw ValueError("concat: off-axis shape mismatch " + shape_str(sa) +
                       " vs " + shape_str(sb));
  Shape out = sa;
  out[static_cast<size_t>(axis)] += sb[static_cast<size_t>(axis)];

  int64_t outer = 1, inner = 1;
  for (int64_t i = 0; i < axis; ++i) outer *= sa[static_cast<size_t>(i)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < sa.size(); ++i)
    inner *= sa[i];
  const int64_t ea = sa[static_cast<size_t>(axis)] * inner;
  const int64_t eb = sb[static_cast<size_t>(axis)] * inner;

  auto impl = alloc(out, a.dtype());
  const auto& da = a.data();
  const auto& db = b.data();
  for (int64_t o = 0; o < outer; ++o) {
    std::copy_n(da.begin() + o * ea, ea, impl->data.begin() + o * (ea + eb));
    std::copy_n(db.begin() + o * eb, eb,
                impl->data.begin() + o * (ea + eb) + ea);
  }
  auto pa = a.impl(), pb = b.impl();
  return make_node(std::move(impl), {a, b},
                   [pa, pb, outer, ea, eb](const TensorImpl& self) {
                     if (pa->requires_grad) {
                       ensure_grad(*pa);
                       for (int64_t o = 0; o < outer; ++o)
                         for (int64_t i = 0; i < ea; ++i)
                           pa->grad[o * ea + i] += self.grad[o * (ea + eb) + i];
                     }
                     if (pb->requires_grad) {
                       ensure_grad(*pb);
                       for (int64_t o = 0; o < outer; ++o)
                         for (int64_t i = 0; i < eb; ++i)
                           pb->grad[o * eb + i] +=
                               self.grad[o * (ea + eb) + ea + i];
                     }
                   });
}

Tensor slice(const Tensor& a, int64_t axis, int64_t start, int64_t length) {
  const auto& s = a.shape();
  if (axis < 0 || axis >= static_cast<int64_t>(s.size()))
    throw ValueError("slice: axis out of range");
  const int64_t extent = s[static_cast<size_t>(axis)];
  if (start < 0 || length < 1 || start + length > extent)
    throw ValueError("slice: bounds out of range");
  Shape out = s;
  out[static_cast<size_t>(axis)] = length;

  int64_t outer = 1, inner = 1;
  for (int64_t i = 0; i < axis; ++i) outer *= s[static_cast<size_t>(i)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i)
    inner *= s[i];

  auto impl = alloc(out, a.dtype());
  const auto& da = a.data();
  for (int64_t o = 0; o < outer; ++o)
    std::copy_n(da.begin() + (o * extent + start) * inner, length * inner,
                impl->data.begin() + o * length * inner);
  auto pa = a.impl();
  return make_node(std::move(impl), {a},
                   [pa, outer, inner, extent, start,
                    length](const TensorImpl& self) {
                     ensure_grad(*pa);
                     for (int64_t o = 0; o < outer; ++o)
                       for (int64_t i = 0; i < length * inner; ++i)
                         pa->grad[(o * extent + start) * inner + i] +=
                             self.grad[o * length * inner + i];
                   });
}

Tensor repeat_rows(const Tensor& a, int64_t times) {
  if (a.dim() != 2) throw ValueError("repeat_rows: rank-2 required");
  if (times < 1) throw ValueError("repeat_rows: times < 1");
  const int64_t n = a.size(0), k = a.size(1);
  auto impl = alloc({n * times, k}, a.dtype());
  const auto& da = a.data();
  for (int64_t r = 0; r < n; ++r)
    for (int64_t t = 0; t < times; ++t)
      std::copy_n(da.begin() + r * k, k,
                  impl->data.begin() + (r * times + t) * k);
  auto pa = a.impl();
  return make_node(std::move(impl), {a},
                   [pa, n, k, times](const TensorImpl& self) {
                     ensure_grad(*pa);
                     for (int64_t r = 0; r < n; ++r)
                       for (int64_t t = 0; t < times; ++t)
                         for (int64_t j = 0; j < k; ++j)
                           pa->grad[r * k + j] +=
                               self.grad[(r * times + t) * k + j];
                   });
}

// --- reductions -------------------------------------------------------------

Tensor sum(const Tensor& a) {
  auto impl = alloc({1}, a.dtype());
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  impl->data[0] = acc;
  auto pa = a.impl();
  return make_node(std::move(impl), {a}, [pa](const TensorImpl& self) {
    ensure_grad(*pa);
    for (double& g : pa->grad) g += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a.numel());
  auto impl = alloc({1}, a.dtype());
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  impl->data[0] = acc * inv;
  auto pa = a.impl();
  return make_node(std::move(impl), {a}, [pa, inv](const TensorImpl& self) {
    ensure_grad(*pa);
    for (double& g : pa->grad) g += self.grad[0] * inv;
  });
}

// --- activations ------------------------------------------------------------

Tensor relu(const Tensor& a) { return leaky_relu(a, 0.0); }

Tensor leaky_relu(const Tensor& a, double slope) {
  if (slope < 0.0 || slope > 1.0)
    throw ValueError("leaky_relu: slope must be in [0, 1]");
  auto impl = alloc(a.shape(), a.dtype());
  const auto& da = a.data();
  for (size_t i = 0; i < impl->data.size(); ++i)
    impl->data[i] = da[i] >= 0.0 ? da[i] : slope * da[i];
  auto pa = a.impl();
  return make_node(std::move(impl), {a}, [pa, slope](const TensorImpl& self) {
    ensure_grad(*pa);
    for (size_t i = 0; i < self.grad.size(); ++i)
      pa->grad[i] += self.grad[i] * (pa->data[i] >= 0.0 ? 1.0 : slope);
  });
}

Tensor clamp_op(const Tensor& a, double lo, double hi) {
  if (lo > hi) throw ValueError("clamp: lo > hi");
  auto impl = alloc(a.shape(), a.dtype());
  const auto& da = a.data();
  for (size_t i = 0; i < impl->data.size(); ++i)
    impl->data[i] = std::min(hi, std::max(lo, da[i]));
  auto pa = a.impl();
  return make_node(std::move(impl), {a},
                   [pa, lo, hi](const TensorImpl& self) {
                     ensure_grad(*pa);
                     for (size_t i = 0; i < self.grad.size(); ++i)
                       if (pa->data[i] > lo && pa->data[i] < hi)
                         pa->grad[i] += self.grad[i];
                   });
}

Tensor tanh_op(const Tensor& a) {
  auto impl = alloc(a.shape(), a.dtype());
  const auto& da = a.data();
  for (size_t i = 0; i < impl->data.size(); ++i)
    impl->data[i] = std::tanh(da[i]);
  auto pa = a.impl();
  return make_node(std::move(impl), {a}, [pa](const TensorImpl& self) {
    ensure_grad(*pa);
    for (size_t i = 0; i < self.grad.size(); ++i) {
      const double y = std::tanh(pa->data[i]);
      pa->grad[i] += self.grad[i] * (1.0 - y * y);
    }
  });
}

Tensor sigmoid(const Tensor& a) {
  auto impl = alloc(a.shape(), a.dtype());
  const auto& da = a.data();
  for (size_t i = 0; i < impl->data.size(); ++i)
    impl->data[i] = 1.0 / (1.0 + std::exp(-da[i]));
  auto pa = a.impl();
  auto out = impl;  // backward reads the forward output
  return make_node(std::move(impl), {a}, [pa, out](const TensorImpl& self) {
    ensure_grad(*pa);
    for (size_t i = 0; i < self.grad.size(); ++i) {
      const double y = out->data[i];
      pa->grad[i] += self.grad[i] * y * (1.0 - y);
    }
  });
}

Tensor log_op(const Tensor& a) {
  auto impl = alloc(a.shape(), a.dtype());
  const auto& da = a.data();
  for (size_t i = 0; i < impl->data.size(); ++i) {
    if (da[i] <= 0.0) throw NumericalError("log of non-positive value");
    impl->data[i] = std::log(da[i]);
  }
  auto pa = a.impl();
  return make_node(std::move(impl), {a}, [pa](const TensorImpl& self) {
    ensure_grad(*pa);
    for (size_t i = 0; i < self.grad.size(); ++i)
      pa->grad[i] += self.grad[i] / pa->data[i];
  });
}

// --- autodiff ---------------------------------------------------------------

void backward(const Tensor& root) {
  if (!root.defined()) throw ValueError("backward: undefined tensor");
  if (root.numel() != 1) throw ValueError("backward: root must be a scalar");
  if (!root.requires_grad())
    throw ValueError("backward: root is detached from the tape");

  // Iterative post-order DFS over the tape.
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> visited;
  std::vector<std::pair<TensorImpl*, size_t>> stack;
  stack.emplace_back(root.raw(), 0);
  visited.insert(root.raw());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorImpl* p = node->parents[next++].raw();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  ensure_grad(*root.raw());
  root.raw()->grad[0] += 1.0;
  for (size_t i = order.size(); i-- > 0;) {
    TensorImpl* node = order[i];
    if (node->backward_fn && node->grad.size() == node->data.size())
      node->backward_fn(*node);
  }
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f,
                        const Tensor& x, double h) {
  if (h <= 0) throw ValueError("finite_diff_grad: h must be positive");
  Tensor probe = x.clone();
  Tensor out = zeros(x.shape(), DType::f64);
  auto& pd = probe.mutable_data();
  for (size_t i = 0; i < pd.size(); ++i) {
    const double orig = pd[i];
    pd[i] = orig + h;
    const double fp = f(probe);
    pd[i] = orig - h;
    const double fm = f(probe);
    pd[i] = orig;
    out.mutable_data()[i] = (fp - fm) / (2.0 * h);
  }
  return out;
}

}  // namespace tgan
