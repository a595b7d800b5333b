#pragma once

#include <functional>
#include <memory>

#include "tgan/common.hpp"

namespace tgan {

struct TensorImpl;

// Dense n-dimensional array of reals with optional reverse-mode gradient
// tracking. Value-semantic handle; copies share the underlying buffer.
// All arithmetic is carried out in double precision; the dtype tag controls
// on-disk precision and is propagated through ops.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  int64_t dim() const { return static_cast<int64_t>(shape().size()); }
  int64_t size(int64_t axis) const;
  int64_t numel() const;
  DType dtype() const;

  const std::vector<double>& data() const;
  std::vector<double>& mutable_data();

  bool requires_grad() const;
  Tensor& set_requires_grad(bool value);
  bool has_grad() const;
  const std::vector<double>& grad() const;
  void zero_grad();

  double item() const;  // requires numel() == 1
  double at(int64_t flat_index) const;

  Tensor detach() const;  // shares data, drops the tape
  Tensor clone() const;   // deep copy, no tape
  bool all_finite() const;

  std::shared_ptr<TensorImpl> impl() const { return impl_; }
  TensorImpl* raw() const { return impl_.get(); }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

struct TensorImpl {
  Shape shape;
  DType dtype = DType::f64;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // sized lazily, same length as data
  // Tape edge: inputs this value was computed from, and the rule that
  // scatters this node's gradient into theirs.
  std::vector<Tensor> parents;
  std::function<void(const TensorImpl&)> backward_fn;
};

// --- construction -----------------------------------------------------------

Tensor zeros(const Shape& shape, DType dtype = DType::f64);
Tensor ones(const Shape& shape, DType dtype = DType::f64);
Tensor full(const Shape& shape, double value, DType dtype = DType::f64);
Tensor from_data(const Shape& shape, std::vector<double> values,
                 DType dtype = DType::f64);
Tensor uniform(const Shape& shape, double lo, double hi, Rng& rng,
               DType dtype = DType::f64);
Tensor normal(const Shape& shape, double mu, double sigma, Rng& rng,
              DType dtype = DType::f64);
// fan_in = product of all dimensions except axis 0 (the output axis).
Tensor he_normal(const Shape& shape, Rng& rng, DType dtype = DType::f64);

struct Init {
  enum Kind { Zeros, Ones, Constant, Uniform, Normal, HeNormal } kind = Zeros;
  double a = 0.0, b = 0.0;  // constant c / range / (mu, sigma)
};

Tensor create(const Shape& shape, const Init& init, uint64_t seed,
              DType dtype = DType::f64);

// --- differentiable primitives ---------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor reshape(const Tensor& a, const Shape& shape);
Tensor permute(const Tensor& a, const std::vector<int64_t>& perm);
Tensor concat(const Tensor& a, const Tensor& b, int64_t axis);
Tensor slice(const Tensor& a, int64_t axis, int64_t start, int64_t length);
Tensor sum(const Tensor& a);   // -> shape [1]
Tensor mean(const Tensor& a);  // -> shape [1]
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope);
Tensor tanh_op(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor log_op(const Tensor& a);  // elementwise natural log
// Elementwise clamp to [lo, hi]; gradient passes through strictly interior
// elements and is zero at clamped ones.
Tensor clamp_op(const Tensor& a, double lo, double hi);

// Repeats a [N x K] tensor row-block-wise into [N*times x K] (each row
// repeated `times` consecutive rows). Used to share z0 across frames.
Tensor repeat_rows(const Tensor& a, int64_t times);

// --- autodiff ---------------------------------------------------------------

// Reverse-mode sweep from a scalar root. Accumulates into .grad of every
// requires_grad leaf reachable through the tape. Gradients add across calls
// until zero_grad().
void backward(const Tensor& root);

// Central-difference gradient oracle: (f(x+h e_i) - f(x-h e_i)) / 2h.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f,
                        const Tensor& x, double h = 1e-5);

}  // namespace tgan
