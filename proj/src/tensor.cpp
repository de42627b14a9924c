#include "mtt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include <Eigen/Dense>

#include "mtt/rng.hpp"

namespace mtt::nn {

namespace {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatCM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;
template <typename T>
using MapRM = Eigen::Map<MatRM<T>>;
template <typename T>
using MapCRM = Eigen::Map<const MatRM<T>>;
template <typename T>
using MapCM = Eigen::Map<MatCM<T>>;
template <typename T>
using StridedRM = Eigen::Map<MatRM<T>, Eigen::Unaligned, Eigen::OuterStride<>>;
template <typename T>
using StridedCRM = Eigen::Map<const MatRM<T>, Eigen::Unaligned, Eigen::OuterStride<>>;

// im2col/col2im tile budget, in elements. Keeps scratch ~32 MB in float at the
// full spectrogram resolution while amortizing the GEMM.
constexpr long kTileElems = 1L << 23;

thread_local bool g_grad_enabled = true;

template <typename T>
void check_shape(const TensorT<T>& t, const char* op) {
  if (!t.defined()) throw ValidationError(std::string(op) + ": undefined tensor");
  if (t.rank() < 1 || t.rank() > 4) throw ValidationError(std::string(op) + ": rank must be 1..4");
}

template <typename T>
void check_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* op) {
  check_shape(a, op);
  check_shape(b, op);
  if (a.shape() != b.shape()) throw ValidationError(std::string(op) + ": shape mismatch");
}

template <typename T>
void debug_check_finite(const TensorT<T>& t, const char* op) {
#ifndef NDEBUG
  for (T v : t.values()) {
    if (!std::isfinite(static_cast<double>(v))) {
      throw ValidationError(std::string(op) + ": non-finite value produced");
    }
  }
#else
  (void)t;
  (void)op;
#endif
}

template <typename T>
bool track(std::initializer_list<const TensorT<T>*> ins) {
  if (!grad_enabled()) return false;
  for (const auto* t : ins) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

template <typename T>
void attach(const char* op, std::vector<TensorT<T>> inputs, TensorT<T>& out,
            std::function<void(const T*)> backward) {
  auto node = std::make_shared<NodeT<T>>();
  node->op = op;
  node->inputs = std::move(inputs);
  node->backward = std::move(backward);
  node->out = out.storage();
  out.storage()->requires_grad = true;
  out.storage()->node = std::move(node);
}

// Gather conv patches for grid positions [grid0, grid1) into a column-major
// (C*K*K) x (grid1-grid0) buffer; out-of-image taps are zero.
template <typename T>
void im2col(const T* img, int C, int H, int W, int K, int stride, int pad, long grid0, long grid1,
            int grid_w, T* col) {
  T* dst = col;
  for (long idx = grid0; idx < grid1; ++idx) {
    const long gh = idx / grid_w;
    const long gw = idx % grid_w;
    for (int c = 0; c < C; ++c) {
      const T* plane = img + static_cast<long>(c) * H * W;
      for (int kh = 0; kh < K; ++kh) {
        const long ih = gh * stride - pad + kh;
        if (ih < 0 || ih >= H) {
          for (int kw = 0; kw < K; ++kw) *dst++ = T{};
          continue;
        }
        const T* row = plane + ih * W;
        for (int kw = 0; kw < K; ++kw) {
          const long iw = gw * stride - pad + kw;
          *dst++ = (iw >= 0 && iw < W) ? row[iw] : T{};
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add the column buffer back into the image.
template <typename T>
void col2im(const T* col, int C, int H, int W, int K, int stride, int pad, long grid0, long grid1,
            int grid_w, T* img) {
  const T* src = col;
  for (long idx = grid0; idx < grid1; ++idx) {
    const long gh = idx / grid_w;
    const long gw = idx % grid_w;
    for (int c = 0; c < C; ++c) {
      T* plane = img + static_cast<long>(c) * H * W;
      for (int kh = 0; kh < K; ++kh) {
        const long ih = gh * stride - pad + kh;
        if (ih < 0 || ih >= H) {
          src += K;
          continue;
        }
        T* row = plane + ih * W;
        for (int kw = 0; kw < K; ++kw) {
          const long iw = gw * stride - pad + kw;
          if (iw >= 0 && iw < W) row[iw] += *src;
          ++src;
        }
      }
    }
  }
}

template <typename T>
long tile_cols_for(long rows) {
  return std::max<long>(1, kTileElems / std::max<long>(1, rows));
}

}  // namespace

long shape_numel(const Shape& shape) {
  long n = 1;
  for (int d : shape) {
    if (d <= 0) throw ValidationError("tensor: dimensions must be positive");
    n *= d;
  }
  return n;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

template <typename T>
TensorT<T> TensorT<T>::zeros(Shape shape) {
  if (shape.empty() || shape.size() > 4) throw ValidationError("tensor: rank must be 1..4");
  TensorT t;
  t.s_ = std::make_shared<StorageT<T>>();
  t.s_->shape = std::move(shape);
  t.s_->v.assign(static_cast<std::size_t>(shape_numel(t.s_->shape)), T{});
  return t;
}

template <typename T>
TensorT<T> TensorT<T>::full(Shape shape, T value) {
  TensorT t = zeros(std::move(shape));
  std::fill(t.s_->v.begin(), t.s_->v.end(), value);
  return t;
}

template <typename T>
TensorT<T> TensorT<T>::from(Shape shape, std::vector<T> values) {
  if (shape.empty() || shape.size() > 4) throw ValidationError("tensor: rank must be 1..4");
  if (static_cast<long>(values.size()) != shape_numel(shape)) {
    throw ValidationError("tensor: value count does not match shape");
  }
  TensorT t;
  t.s_ = std::make_shared<StorageT<T>>();
  t.s_->shape = std::move(shape);
  t.s_->v = std::move(values);
  return t;
}

template <typename T>
std::vector<T>& TensorT<T>::grad() {
  if (!s_) throw ValidationError("grad: undefined tensor");
  if (s_->g.empty()) s_->g.assign(s_->v.size(), T{});
  return s_->g;
}

template <typename T>
void TensorT<T>::zero_grad() {
  if (s_ && !s_->g.empty()) std::fill(s_->g.begin(), s_->g.end(), T{});
}

template <typename T>
T TensorT<T>::item() const {
  if (!s_ || s_->v.size() != 1) throw ValidationError("item: tensor is not scalar");
  return s_->v[0];
}

template <typename T>
void TensorT<T>::backward() {
  if (!s_) throw ValidationError("backward: undefined tensor");
  if (s_->v.size() != 1) throw ValidationError("backward: output must be scalar");
  if (!s_->node) throw ValidationError("backward: no forward graph recorded for this tensor");

  // Postorder DFS over producer nodes; reversed it yields consumers before
  // producers, so every output gradient is complete before its node runs.
  struct Frame {
    NodeT<T>* n;
    std::size_t next;
  };
  std::vector<NodeT<T>*> order;
  std::unordered_set<NodeT<T>*> seen;
  std::vector<Frame> stack{{s_->node.get(), 0}};
  seen.insert(s_->node.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.n->inputs.size()) {
      auto& in = f.n->inputs[f.next++];
      NodeT<T>* child = in.storage()->node.get();
      if (child != nullptr && seen.insert(child).second) stack.push_back({child, 0});
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }

  // Interior gradients are per-pass scratch; leaf gradients accumulate.
  for (NodeT<T>* n : order) {
    auto out = n->out.lock();
    if (!out) throw ValidationError("backward: graph output storage expired");
    out->g.assign(out->v.size(), T{});
  }
  s_->g.assign(1, T{1});
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto out = (*it)->out.lock();
    (*it)->backward(out->g.data());
  }
}

// --- elementwise -------------------------------------------------------------

namespace {

template <typename T>
TensorT<T> binary_pointwise(const char* name, const TensorT<T>& a, const TensorT<T>& b,
                            T (*fwd)(T, T), void (*bwd)(const T*, const T*, const T*, long,
                                                        std::vector<T>*, std::vector<T>*)) {
  check_same_shape(a, b, name);
  TensorT<T> out = TensorT<T>::zeros(a.shape());
  const long n = a.numel();
  for (long i = 0; i < n; ++i) out.data()[i] = fwd(a.data()[i], b.data()[i]);
  debug_check_finite(out, name);
  if (track<T>({&a, &b})) {
    TensorT<T> ac = a, bc = b;
    attach<T>(name, {a, b}, out, [ac, bc, bwd, n](const T* gout) mutable {
      std::vector<T>* ga = ac.requires_grad() ? &ac.grad() : nullptr;
      std::vector<T>* gb = bc.requires_grad() ? &bc.grad() : nullptr;
      bwd(gout, ac.data(), bc.data(), n, ga, gb);
    });
  }
  return out;
}

}  // namespace

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  return binary_pointwise<T>(
      "add", a, b, [](T x, T y) { return x + y; },
      [](const T* g, const T*, const T*, long n, std::vector<T>* ga, std::vector<T>* gb) {
        for (long i = 0; i < n; ++i) {
          if (ga) (*ga)[static_cast<std::size_t>(i)] += g[i];
          if (gb) (*gb)[static_cast<std::size_t>(i)] += g[i];
        }
      });
}

template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
  return binary_pointwise<T>(
      "sub", a, b, [](T x, T y) { return x - y; },
      [](const T* g, const T*, const T*, long n, std::vector<T>* ga, std::vector<T>* gb) {
        for (long i = 0; i < n; ++i) {
          if (ga) (*ga)[static_cast<std::size_t>(i)] += g[i];
          if (gb) (*gb)[static_cast<std::size_t>(i)] -= g[i];
        }
      });
}

template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
  return binary_pointwise<T>(
      "mul", a, b, [](T x, T y) { return x * y; },
      [](const T* g, const T* av, const T* bv, long n, std::vector<T>* ga, std::vector<T>* gb) {
        for (long i = 0; i < n; ++i) {
          if (ga) (*ga)[static_cast<std::size_t>(i)] += g[i] * bv[i];
          if (gb) (*gb)[static_cast<std::size_t>(i)] += g[i] * av[i];
        }
      });
}

template <typename T>
TensorT<T> affine(const TensorT<T>& x, T scale, T shift) {
  check_shape(x, "affine");
  TensorT<T> out = TensorT<T>::zeros(x.shape());
  const long n = x.numel();
  for (long i = 0; i < n; ++i) out.data()[i] = scale * x.data()[i] + shift;
  debug_check_finite(out, "affine");
  if (track<T>({&x})) {
    TensorT<T> xc = x;
    attach<T>("affine", {x}, out, [xc, scale, n](const T* gout) mutable {
      auto& gx = xc.grad();
      for (long i = 0; i < n; ++i) gx[static_cast<std::size_t>(i)] += scale * gout[i];
    });
  }
  return out;
}

template <typename T>
TensorT<T> relu(const TensorT<T>& x) {
  check_shape(x, "relu");
  TensorT<T> out = TensorT<T>::zeros(x.shape());
  const long n = x.numel();
  for (long i = 0; i < n; ++i) out.data()[i] = x.data()[i] > T{} ? x.data()[i] : T{};
  if (track<T>({&x})) {
    TensorT<T> xc = x;
    attach<T>("relu", {x}, out, [xc, n](const T* gout) mutable {
      auto& gx = xc.grad();
      const T* xv = xc.data();
      for (long i = 0; i < n; ++i) {
        if (xv[i] > T{}) gx[static_cast<std::size_t>(i)] += gout[i];
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> tanh_op(const TensorT<T>& x) {
  check_shape(x, "tanh");
  TensorT<T> out = TensorT<T>::zeros(x.shape());
  const long n = x.numel();
  for (long i = 0; i < n; ++i) out.data()[i] = std::tanh(x.data()[i]);
  if (track<T>({&x})) {
    TensorT<T> xc = x;
    // Capturing the output handle would create a storage -> node -> closure
    // cycle; a value copy breaks it.
    std::vector<T> y = out.values();
    attach<T>("tanh", {x}, out, [xc, y = std::move(y), n](const T* gout) mutable {
      auto& gx = xc.grad();
      for (long i = 0; i < n; ++i) {
        gx[static_cast<std::size_t>(i)] += gout[i] * (T{1} - y[static_cast<std::size_t>(i)] *
                                                                 y[static_cast<std::size_t>(i)]);
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> sum(const TensorT<T>& x) {
  check_shape(x, "sum");
  T acc{};
  for (T v : x.values()) acc += v;
  TensorT<T> out = TensorT<T>::from({1}, {acc});
  debug_check_finite(out, "sum");
  if (track<T>({&x})) {
    TensorT<T> xc = x;
    attach<T>("sum", {x}, out, [xc](const T* gout) mutable {
      auto& gx = xc.grad();
      for (auto& g : gx) g += gout[0];
    });
  }
  return out;
}

template <typename T>
TensorT<T> mean(const TensorT<T>& x) {
  check_shape(x, "mean");
  const T inv = T{1} / static_cast<T>(x.numel());
  T acc{};
  for (T v : x.values()) acc += v;
  TensorT<T> out = TensorT<T>::from({1}, {acc * inv});
  debug_check_finite(out, "mean");
  if (track<T>({&x})) {
    TensorT<T> xc = x;
    attach<T>("mean", {x}, out, [xc, inv](const T* gout) mutable {
      auto& gx = xc.grad();
      for (auto& g : gx) g += gout[0] * inv;
    });
  }
  return out;
}

template <typename T>
TensorT<T> sq_diff_sum(const TensorT<T>& a, const TensorT<T>& b) {
  check_same_shape(a, b, "sq_diff_sum");
  const long n = a.numel();
  T acc{};
  for (long i = 0; i < n; ++i) {
    const T d = a.data()[i] - b.data()[i];
    acc += d * d;
  }
  TensorT<T> out = TensorT<T>::from({1}, {acc});
  debug_check_finite(out, "sq_diff_sum");
  if (track<T>({&a, &b})) {
    TensorT<T> ac = a, bc = b;
    attach<T>("sq_diff_sum", {a, b}, out, [ac, bc, n](const T* gout) mutable {
      std::vector<T>* ga = ac.requires_grad() ? &ac.grad() : nullptr;
      std::vector<T>* gb = bc.requires_grad() ? &bc.grad() : nullptr;
      for (long i = 0; i < n; ++i) {
        const T d = T{2} * (ac.data()[i] - bc.data()[i]) * gout[0];
        if (ga) (*ga)[static_cast<std::size_t>(i)] += d;
        if (gb) (*gb)[static_cast<std::size_t>(i)] -= d;
      }
    });
  }
  return out;
}

// --- convolution -------------------------------------------------------------

template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& bias, int stride,
                  int pad) {
  check_shape(x, "conv2d");
  check_shape(w, "conv2d");
  if (x.rank() != 4 || w.rank() != 4) throw ValidationError("conv2d: x and w must be rank 4");
  if (stride < 1) throw ValidationError("conv2d: stride must be >= 1");
  if (pad < 0) throw ValidationError("conv2d: pad must be >= 0");
  const int N = x.dim(0), IC = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int OC = w.dim(0), K = w.dim(2);
  if (w.dim(1) != IC) throw ValidationError("conv2d: channel mismatch");
  if (w.dim(3) != K) throw ValidationError("conv2d: kernel must be square");
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != OC)) {
    throw ValidationError("conv2d: bias shape mismatch");
  }
  if (H + 2 * pad < K || W + 2 * pad < K) throw ValidationError("conv2d: kernel exceeds input");
  const int OH = (H + 2 * pad - K) / stride + 1;
  const int OW = (W + 2 * pad - K) / stride + 1;

  TensorT<T> out = TensorT<T>::zeros({N, OC, OH, OW});
  const long ickk = static_cast<long>(IC) * K * K;
  const long grid = static_cast<long>(OH) * OW;
  const long tile = tile_cols_for<T>(ickk);
  std::vector<T> col(static_cast<std::size_t>(ickk * std::min(tile, grid)));
  MapCRM<T> wm(w.data(), OC, ickk);

  for (int n = 0; n < N; ++n) {
    const T* xn = x.data() + static_cast<long>(n) * IC * H * W;
    T* on = out.data() + static_cast<long>(n) * OC * grid;
    for (long g0 = 0; g0 < grid; g0 += tile) {
      const long g1 = std::min(grid, g0 + tile);
      im2col(xn, IC, H, W, K, stride, pad, g0, g1, OW, col.data());
      MapCM<T> cm(col.data(), ickk, g1 - g0);
      StridedRM<T> om(on + g0, OC, g1 - g0, Eigen::OuterStride<>(grid));
      om.noalias() = wm * cm;
    }
    if (bias.defined()) {
      for (int oc = 0; oc < OC; ++oc) {
        const T b = bias.data()[oc];
        T* row = on + static_cast<long>(oc) * grid;
        for (long i = 0; i < grid; ++i) row[i] += b;
      }
    }
  }
  debug_check_finite(out, "conv2d");

  if (track<T>({&x, &w, &bias})) {
    TensorT<T> xc = x, wc = w, bc = bias;
    std::vector<TensorT<T>> ins{x, w};
    if (bias.defined()) ins.push_back(bias);
    attach<T>("conv2d", std::move(ins), out,
              [xc, wc, bc, stride, pad, N, IC, H, W, OC, K, OH, OW](const T* gout) mutable {
                const long ickk = static_cast<long>(IC) * K * K;
                const long grid = static_cast<long>(OH) * OW;
                const long tile = tile_cols_for<T>(ickk);
                const bool need_x = xc.requires_grad();
                const bool need_w = wc.requires_grad();
                std::vector<T> col(static_cast<std::size_t>(ickk * std::min(tile, grid)));
                std::vector<T> dcol(need_x ? col.size() : 0);
                MapCRM<T> wm(wc.data(), OC, ickk);
                for (int n = 0; n < N; ++n) {
                  const T* xn = xc.data() + static_cast<long>(n) * IC * H * W;
                  const T* gn = gout + static_cast<long>(n) * OC * grid;
                  for (long g0 = 0; g0 < grid; g0 += tile) {
                    const long g1 = std::min(grid, g0 + tile);
                    StridedCRM<T> gm(gn + g0, OC, g1 - g0, Eigen::OuterStride<>(grid));
                    if (need_w) {
                      im2col(xn, IC, H, W, K, stride, pad, g0, g1, OW, col.data());
                      MapCM<T> cm(col.data(), ickk, g1 - g0);
                      MapRM<T> dwm(wc.grad().data(), OC, ickk);
                      dwm.noalias() += gm * cm.transpose();
                    }
                    if (need_x) {
                      MapCM<T> dcm(dcol.data(), ickk, g1 - g0);
                      dcm.noalias() = wm.transpose() * gm;
                      col2im(dcol.data(), IC, H, W, K, stride, pad, g0, g1, OW,
                             xc.grad().data() + static_cast<long>(n) * IC * H * W);
                    }
                  }
                }
                if (bc.defined() && bc.requires_grad()) {
                  auto& gb = bc.grad();
                  for (int n = 0; n < N; ++n) {
                    const T* gn = gout + static_cast<long>(n) * OC * grid;
                    for (int oc = 0; oc < OC; ++oc) {
                      T acc{};
                      const T* row = gn + static_cast<long>(oc) * grid;
                      for (long i = 0; i < grid; ++i) acc += row[i];
                      gb[static_cast<std::size_t>(oc)] += acc;
                    }
                  }
                }
              });
  }
  return out;
}

template <typename T>
TensorT<T> conv_transpose2d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& bias,
                            int stride, int pad, int output_pad) {
  check_shape(x, "conv_transpose2d");
  check_shape(w, "conv_transpose2d");
  if (x.rank() != 4 || w.rank() != 4) {
    throw ValidationError("conv_transpose2d: x and w must be rank 4");
  }
  if (stride < 1) throw ValidationError("conv_transpose2d: stride must be >= 1");
  if (pad < 0) throw ValidationError("conv_transpose2d: pad must be >= 0");
  if (output_pad < 0 || output_pad >= stride) {
    throw ValidationError("conv_transpose2d: output_pad must be in [0, stride)");
  }
  const int N = x.dim(0), CI = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int CO = w.dim(1), K = w.dim(2);
  if (w.dim(0) != CI) throw ValidationError("conv_transpose2d: channel mismatch");
  if (w.dim(3) != K) throw ValidationError("conv_transpose2d: kernel must be square");
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != CO)) {
    throw ValidationError("conv_transpose2d: bias shape mismatch");
  }
  const int OH = (H - 1) * stride - 2 * pad + K + output_pad;
  const int OW = (W - 1) * stride - 2 * pad + K + output_pad;
  if (OH < 1 || OW < 1) throw ValidationError("conv_transpose2d: empty output");

  TensorT<T> out = TensorT<T>::zeros({N, CO, OH, OW});
  const long cokk = static_cast<long>(CO) * K * K;
  const long grid = static_cast<long>(H) * W;  // input positions play the conv-output role
  const long ospatial = static_cast<long>(OH) * OW;
  const long tile = tile_cols_for<T>(cokk);
  std::vector<T> tmp(static_cast<std::size_t>(cokk * std::min(tile, grid)));
  MapCRM<T> wm(w.data(), CI, cokk);

  for (int n = 0; n < N; ++n) {
    const T* xn = x.data() + static_cast<long>(n) * CI * grid;
    T* on = out.data() + static_cast<long>(n) * CO * ospatial;
    for (long g0 = 0; g0 < grid; g0 += tile) {
      const long g1 = std::min(grid, g0 + tile);
      StridedCRM<T> um(xn + g0, CI, g1 - g0, Eigen::OuterStride<>(grid));
      MapCM<T> tm(tmp.data(), cokk, g1 - g0);
      tm.noalias() = wm.transpose() * um;
      col2im(tmp.data(), CO, OH, OW, K, stride, pad, g0, g1, W, on);
    }
    if (bias.defined()) {
      for (int co = 0; co < CO; ++co) {
        const T b = bias.data()[co];
        T* row = on + static_cast<long>(co) * ospatial;
        for (long i = 0; i < ospatial; ++i) row[i] += b;
      }
    }
  }
  debug_check_finite(out, "conv_transpose2d");

  if (track<T>({&x, &w, &bias})) {
    TensorT<T> xc = x, wc = w, bc = bias;
    std::vector<TensorT<T>> ins{x, w};
    if (bias.defined()) ins.push_back(bias);
    attach<T>("conv_transpose2d", std::move(ins), out,
              [xc, wc, bc, stride, pad, N, CI, H, W, CO, K, OH, OW](const T* gout) mutable {
                const long cokk = static_cast<long>(CO) * K * K;
                const long grid = static_cast<long>(H) * W;
                const long ospatial = static_cast<long>(OH) * OW;
                const long tile = tile_cols_for<T>(cokk);
                const bool need_x = xc.requires_grad();
                const bool need_w = wc.requires_grad();
                std::vector<T> col(static_cast<std::size_t>(cokk * std::min(tile, grid)));
                MapCRM<T> wm(wc.data(), CI, cokk);
                for (int n = 0; n < N; ++n) {
                  const T* gn = gout + static_cast<long>(n) * CO * ospatial;
                  const T* xn = xc.data() + static_cast<long>(n) * CI * grid;
                  for (long g0 = 0; g0 < grid; g0 += tile) {
                    const long g1 = std::min(grid, g0 + tile);
                    // Patches of the output gradient, viewed through the
                    // equivalent forward-conv geometry.
                    im2col(gn, CO, OH, OW, K, stride, pad, g0, g1, W, col.data());
                    MapCM<T> cm(col.data(), cokk, g1 - g0);
                    if (need_x) {
                      StridedRM<T> dum(xc.grad().data() + static_cast<long>(n) * CI * grid + g0,
                                       CI, g1 - g0, Eigen::OuterStride<>(grid));
                      dum.noalias() += wm * cm;
                    }
                    if (need_w) {
                      StridedCRM<T> um(xn + g0, CI, g1 - g0, Eigen::OuterStride<>(grid));
                      MapRM<T> dwm(wc.grad().data(), CI, cokk);
                      dwm.noalias() += um * cm.transpose();
                    }
                  }
                }
                if (bc.defined() && bc.requires_grad()) {
                  auto& gb = bc.grad();
                  for (int n = 0; n < N; ++n) {
                    const T* gn = gout + static_cast<long>(n) * CO * ospatial;
                    for (int co = 0; co < CO; ++co) {
                      T acc{};
                      const T* row = gn + static_cast<long>(co) * ospatial;
                      for (long i = 0; i < ospatial; ++i) acc += row[i];
                      gb[static_cast<std::size_t>(co)] += acc;
                    }
                  }
                }
              });
  }
  return out;
}

// --- instance norm -----------------------------------------------------------

template <typename T>
TensorT<T> instance_norm(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                         T eps) {
  check_shape(x, "instance_norm");
  check_shape(gamma, "instance_norm");
  check_shape(beta, "instance_norm");
  if (x.rank() != 4) throw ValidationError("instance_norm: x must be rank 4");
  const int N = x.dim(0), C = x.dim(1);
  const long M = static_cast<long>(x.dim(2)) * x.dim(3);
  if (gamma.rank() != 1 || gamma.dim(0) != C || beta.rank() != 1 || beta.dim(0) != C) {
    throw ValidationError("instance_norm: gamma/beta must have length C");
  }
  if (!(eps > T{})) throw ValidationError("instance_norm: eps must be positive");

  TensorT<T> out = TensorT<T>::zeros(x.shape());
  std::vector<T> mu(static_cast<std::size_t>(N) * C), inv(static_cast<std::size_t>(N) * C);
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const T* src = x.data() + (static_cast<long>(n) * C + c) * M;
      T* dst = out.data() + (static_cast<long>(n) * C + c) * M;
      T m{};
      for (long i = 0; i < M; ++i) m += src[i];
      m /= static_cast<T>(M);
      T var{};
      for (long i = 0; i < M; ++i) {
        const T d = src[i] - m;
        var += d * d;
      }
      var /= static_cast<T>(M);
      const T is = T{1} / std::sqrt(var + eps);
      mu[static_cast<std::size_t>(n) * C + c] = m;
      inv[static_cast<std::size_t>(n) * C + c] = is;
      const T g = gamma.data()[c], b = beta.data()[c];
      for (long i = 0; i < M; ++i) dst[i] = (src[i] - m) * is * g + b;
    }
  }
  debug_check_finite(out, "instance_norm");

  if (track<T>({&x, &gamma, &beta})) {
    TensorT<T> xc = x, gc = gamma, bc = beta;
    attach<T>("instance_norm", {x, gamma, beta}, out,
              [xc, gc, bc, mu, inv, N, C, M](const T* gout) mutable {
                const bool need_x = xc.requires_grad();
                const bool need_g = gc.requires_grad();
                const bool need_b = bc.requires_grad();
                for (int n = 0; n < N; ++n) {
                  for (int c = 0; c < C; ++c) {
                    const long off = (static_cast<long>(n) * C + c) * M;
                    const T* xv = xc.data() + off;
                    const T* go = gout + off;
                    const T m = mu[static_cast<std::size_t>(n) * C + c];
                    const T is = inv[static_cast<std::size_t>(n) * C + c];
                    const T g = gc.data()[c];
                    T sum_g{}, sum_gx{}, sum_go{}, sum_gox{};
                    for (long i = 0; i < M; ++i) {
                      const T xhat = (xv[i] - m) * is;
                      const T dxhat = go[i] * g;
                      sum_g += dxhat;
                      sum_gx += dxhat * xhat;
                      sum_go += go[i];
                      sum_gox += go[i] * xhat;
                    }
                    if (need_x) {
                      T* gx = xc.grad().data() + off;
                      const T mg = sum_g / static_cast<T>(M);
                      const T mgx = sum_gx / static_cast<T>(M);
                      for (long i = 0; i < M; ++i) {
                        const T xhat = (xv[i] - m) * is;
                        gx[i] += is * (go[i] * g - mg - xhat * mgx);
                      }
                    }
                    if (need_g) gc.grad()[static_cast<std::size_t>(c)] += sum_gox;
                    if (need_b) bc.grad()[static_cast<std::size_t>(c)] += sum_go;
                  }
                }
              });
  }
  return out;
}

// --- gram ---------------------------------------------------------------------

template <typename T>
TensorT<T> gram(const TensorT<T>& x, bool normalized) {
  check_shape(x, "gram");
  int N, C;
  long M;
  if (x.rank() == 4) {
    N = x.dim(0);
    C = x.dim(1);
    M = static_cast<long>(x.dim(2)) * x.dim(3);
  } else if (x.rank() == 2) {
    N = 1;
    C = x.dim(0);
    M = x.dim(1);
  } else {
    throw ValidationError("gram: x must be rank 2 or 4");
  }
  const T scale = normalized ? T{1} / static_cast<T>(static_cast<double>(C) * M) : T{1};

  TensorT<T> out =
      x.rank() == 4 ? TensorT<T>::zeros({N, C, C}) : TensorT<T>::zeros({C, C});
  for (int n = 0; n < N; ++n) {
    MapCRM<T> xm(x.data() + static_cast<long>(n) * C * M, C, M);
    MapRM<T> gmat(out.data() + static_cast<long>(n) * C * C, C, C);
    // Rank update fills the lower triangle; mirroring keeps G exactly
    // symmetric instead of recomputing each (i, j) pair independently.
    gmat.template selfadjointView<Eigen::Lower>().rankUpdate(xm, scale);
    for (int i = 0; i < C; ++i) {
      for (int j = i + 1; j < C; ++j) gmat(i, j) = gmat(j, i);
    }
  }
  debug_check_finite(out, "gram");

  if (track<T>({&x})) {
    TensorT<T> xc = x;
    attach<T>("gram", {x}, out, [xc, N, C, M, scale](const T* gout) mutable {
      if (!xc.requires_grad()) return;
      for (int n = 0; n < N; ++n) {
        MapCRM<T> xm(xc.data() + static_cast<long>(n) * C * M, C, M);
        MapCRM<T> gm(gout + static_cast<long>(n) * C * C, C, C);
        MapRM<T> dxm(xc.grad().data() + static_cast<long>(n) * C * M, C, M);
        dxm.noalias() += scale * ((gm + gm.transpose()) * xm);
      }
    });
  }
  return out;
}

// --- total variation -----------------------------------------------------------

template <typename T>
TensorT<T> tv(const TensorT<T>& x) {
  check_shape(x, "tv");
  if (x.rank() != 4) throw ValidationError("tv: x must be rank 4");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  T acc{};
  for (long p = 0; p < static_cast<long>(N) * C; ++p) {
    const T* plane = x.data() + p * H * W;
    for (int i = 0; i < H; ++i) {
      for (int j = 0; j < W; ++j) {
        if (i + 1 < H) {
          const T d = plane[(i + 1) * W + j] - plane[i * W + j];
          acc += d * d;
        }
        if (j + 1 < W) {
          const T d = plane[i * W + j + 1] - plane[i * W + j];
          acc += d * d;
        }
      }
    }
  }
  TensorT<T> out = TensorT<T>::from({1}, {acc});
  debug_check_finite(out, "tv");

  if (track<T>({&x})) {
    TensorT<T> xc = x;
    attach<T>("tv", {x}, out, [xc, N, C, H, W](const T* gout) mutable {
      const T g2 = T{2} * gout[0];
      for (long p = 0; p < static_cast<long>(N) * C; ++p) {
        const T* plane = xc.data() + p * H * W;
        T* gp = xc.grad().data() + p * H * W;
        for (int i = 0; i < H; ++i) {
          for (int j = 0; j < W; ++j) {
            if (i + 1 < H) {
              const T d = g2 * (plane[(i + 1) * W + j] - plane[i * W + j]);
              gp[(i + 1) * W + j] += d;
              gp[i * W + j] -= d;
            }
            if (j + 1 < W) {
              const T d = g2 * (plane[i * W + j + 1] - plane[i * W + j]);
              gp[i * W + j + 1] += d;
              gp[i * W + j] -= d;
            }
          }
        }
      }
    });
  }
  return out;
}

// --- gradient check -------------------------------------------------------------

GradCheckResult gradient_check(
    const std::function<TensorT<double>(const std::vector<TensorT<double>>&)>& fn,
    std::vector<TensorT<double>> inputs, double eps, long max_coords_per_input,
    std::uint64_t seed) {
  if (!(eps > 0.0)) throw ValidationError("gradient_check: eps must be positive");
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  TensorT<double> out = fn(inputs);
  if (out.numel() != 1) throw ValidationError("gradient_check: fn must return a scalar");
  out.backward();

  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (auto& t : inputs) analytic.push_back(t.grad());

  GradCheckResult result;
  NoGradGuard ng;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto& t = inputs[i];
    const long n = t.numel();
    std::vector<long> coords;
    if (max_coords_per_input > 0 && n > max_coords_per_input) {
      for (long k = 0; k < max_coords_per_input; ++k) {
        coords.push_back(static_cast<long>(uniform_index(rng, static_cast<std::uint64_t>(n))));
      }
    } else {
      coords.resize(static_cast<std::size_t>(n));
      for (long k = 0; k < n; ++k) coords[static_cast<std::size_t>(k)] = k;
    }
    for (long j : coords) {
      const double orig = t.data()[j];
      t.data()[j] = orig + eps;
      const double fp = fn(inputs).item();
      t.data()[j] = orig - eps;
      const double fm = fn(inputs).item();
      t.data()[j] = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[i][static_cast<std::size_t>(j)];
      const double abs_err = std::abs(a - numeric);
      const double rel = abs_err / std::max({1.0, std::abs(a), std::abs(numeric)});
      result.max_abs_error = std::max(result.max_abs_error, abs_err);
      result.max_rel_error = std::max(result.max_rel_error, rel);
      ++result.coords_checked;
    }
  }
  return result;
}

// --- instantiations --------------------------------------------------------------

template class TensorT<float>;
template class TensorT<double>;

#define MTT_INSTANTIATE_OPS(T)                                                              \
  template TensorT<T> add<T>(const TensorT<T>&, const TensorT<T>&);                         \
  template TensorT<T> sub<T>(const TensorT<T>&, const TensorT<T>&);                         \
  template TensorT<T> mul<T>(const TensorT<T>&, const TensorT<T>&);                         \
  template TensorT<T> affine<T>(const TensorT<T>&, T, T);                                   \
  template TensorT<T> relu<T>(const TensorT<T>&);                                           \
  template TensorT<T> tanh_op<T>(const TensorT<T>&);                                        \
  template TensorT<T> sum<T>(const TensorT<T>&);                                            \
  template TensorT<T> mean<T>(const TensorT<T>&);                                           \
  template TensorT<T> sq_diff_sum<T>(const TensorT<T>&, const TensorT<T>&);                 \
  template TensorT<T> conv2d<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&,   \
                                int, int);                                                  \
  template TensorT<T> conv_transpose2d<T>(const TensorT<T>&, const TensorT<T>&,            \
                                          const TensorT<T>&, int, int, int);                \
  template TensorT<T> instance_norm<T>(const TensorT<T>&, const TensorT<T>&,               \
                                       const TensorT<T>&, T);                               \
  template TensorT<T> gram<T>(const TensorT<T>&, bool);                                     \
  template TensorT<T> tv<T>(const TensorT<T>&);

MTT_INSTANTIATE_OPS(float)
MTT_INSTANTIATE_OPS(double)

#undef MTT_INSTANTIATE_OPS

}  // namespace mtt::nn
