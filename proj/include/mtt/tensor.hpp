#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "mtt/errors.hpp"

namespace mtt::nn {

// Reverse-mode autodiff over dense tensors of rank <= 4. Float is the
// production precision; double exists so finite-difference checks are not
// drowned by rounding noise. Tensors are cheap handles over shared storage,
// ops build a graph when grad mode is on and any input requires gradients.

using Shape = std::vector<int>;

long shape_numel(const Shape& shape);

template <typename T>
class TensorT;

template <typename T>
struct StorageT;

template <typename T>
struct NodeT {
  const char* op = "";
  std::vector<TensorT<T>> inputs;
  // Receives the output gradient, deposits into the inputs' grad buffers.
  std::function<void(const T* gout)> backward;
  std::weak_ptr<StorageT<T>> out;
};

template <typename T>
struct StorageT {
  Shape shape;
  std::vector<T> v;
  std::vector<T> g;  // allocated lazily, same length as v once touched
  bool requires_grad = false;
  std::shared_ptr<NodeT<T>> node;
};

// Thread-local switch; ops record no graph while it is off.
bool grad_enabled();

struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <typename T>
class TensorT {
 public:
  TensorT() = default;

  static TensorT zeros(Shape shape);
  static TensorT full(Shape shape, T value);
  static TensorT from(Shape shape, std::vector<T> values);

  bool defined() const { return s_ != nullptr; }
  const Shape& shape() const { return s_->shape; }
  int dim(int i) const { return s_->shape[static_cast<std::size_t>(i)]; }
  int rank() const { return static_cast<int>(s_->shape.size()); }
  long numel() const { return static_cast<long>(s_->v.size()); }

  std::vector<T>& values() { return s_->v; }
  const std::vector<T>& values() const { return s_->v; }
  T* data() { return s_->v.data(); }
  const T* data() const { return s_->v.data(); }

  bool requires_grad() const { return s_ && s_->requires_grad; }
  TensorT& set_requires_grad(bool rg) {
    s_->requires_grad = rg;
    return *this;
  }

  // Gradient buffer, zero-allocated on first touch.
  std::vector<T>& grad();
  bool has_grad() const { return s_ && !s_->g.empty(); }
  void zero_grad();

  // Scalar tensors only. Runs reverse-mode accumulation from this output;
  // leaf gradients accumulate across calls, interior gradients are reset per
  // call. Throws ValidationError if no forward graph was recorded.
  void backward();

  T item() const;

  std::shared_ptr<StorageT<T>>& storage() { return s_; }
  const std::shared_ptr<StorageT<T>>& storage() const { return s_; }

 private:
  std::shared_ptr<StorageT<T>> s_;
};

using Tensor = TensorT<float>;

// --- elementwise / reductions ---------------------------------------------
template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b);
template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b);
template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b);
// scale * x + shift
template <typename T>
TensorT<T> affine(const TensorT<T>& x, T scale, T shift);
template <typename T>
TensorT<T> relu(const TensorT<T>& x);
template <typename T>
TensorT<T> tanh_op(const TensorT<T>& x);
template <typename T>
TensorT<T> sum(const TensorT<T>& x);
template <typename T>
TensorT<T> mean(const TensorT<T>& x);
// sum((a - b)^2)
template <typename T>
TensorT<T> sq_diff_sum(const TensorT<T>& a, const TensorT<T>& b);

// --- structured ops ---------------------------------------------------------
// x (N, IC, H, W), w (OC, IC, K, K), optional bias (OC); zero padding.
// Output (N, OC, OH, OW) with OH = (H + 2 pad - K) / stride + 1 (floored).
template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& bias, int stride,
                  int pad);

// x (N, CI, H, W), w (CI, CO, K, K), optional bias (CO).
// Output (N, CO, OH, OW) with OH = (H - 1) stride - 2 pad + K + output_pad.
// Adjoint of conv2d in x for matching geometry and shared w.
template <typename T>
TensorT<T> conv_transpose2d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& bias,
                            int stride, int pad, int output_pad);

// Per-sample, per-channel normalization over the spatial extent (biased
// variance), then scale/shift by gamma/beta (each of length C).
template <typename T>
TensorT<T> instance_norm(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                         T eps = static_cast<T>(1e-5));

// Gram matrix of flattened feature maps. x is (N, C, H, W) -> (N, C, C) or
// (C, M) -> (C, C); G = X X^T, divided by C*M when normalized.
template <typename T>
TensorT<T> gram(const TensorT<T>& x, bool normalized);

// Anisotropic total variation: sum of squared horizontal and vertical
// neighbor differences over a (N, C, H, W) tensor.
template <typename T>
TensorT<T> tv(const TensorT<T>& x);

// --- verification ------------------------------------------------------------
// Central-difference check of d fn / d inputs at the given point. fn must be a
// pure scalar-valued function of the inputs. Every coordinate is checked
// unless max_coords_per_input > 0, in which case a seeded subsample is used.
// Relative error per coordinate: |analytic - numeric| / max(1, |a|, |n|).
struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  long coords_checked = 0;
};

GradCheckResult gradient_check(
    const std::function<TensorT<double>(const std::vector<TensorT<double>>&)>& fn,
    std::vector<TensorT<double>> inputs, double eps = 1e-4, long max_coords_per_input = -1,
    std::uint64_t seed = 0);

}  // namespace mtt::nn
