#include "mtt/loss.hpp"

#include <cmath>
#include <string>

#include "mtt/rng.hpp"

namespace mtt::nn {

template <typename T>
LossNetworkT<T> make_loss_network(std::uint64_t seed, const std::vector<int>& widths) {
  if (widths.empty()) throw ValidationError("loss network: needs at least one stage");
  LossNetworkT<T> net;
  std::mt19937_64 g(seed);
  int in_ch = 3;
  for (int w : widths) {
    if (w < 1) throw ValidationError("loss network: widths must be positive");
    const double bound = std::sqrt(6.0 / (static_cast<double>(in_ch) * 9.0));
    TensorT<T> wt = TensorT<T>::zeros({w, in_ch, 3, 3});
    for (auto& v : wt.values()) v = static_cast<T>(uniform_range(g, -bound, bound));
    net.weights.push_back(std::move(wt));
    net.biases.push_back(TensorT<T>::zeros({w}));
    in_ch = w;
  }
  net.texture_stages.clear();
  for (int i = 1; i <= static_cast<int>(widths.size()); ++i) net.texture_stages.push_back(i);
  net.content_stage = widths.size() >= 2 ? 2 : 1;
  return net;
}

template <typename T>
std::vector<TensorT<T>> loss_features(const LossNetworkT<T>& net, const TensorT<T>& x) {
  if (!x.defined() || x.rank() != 4) throw ValidationError("loss features: x must be rank 4");
  if (net.weights.empty() || net.weights.size() != net.biases.size()) {
    throw ValidationError("loss features: malformed network");
  }
  std::vector<TensorT<T>> features;
  features.reserve(net.weights.size());
  TensorT<T> h = x;
  for (std::size_t i = 0; i < net.weights.size(); ++i) {
    h = relu(conv2d(h, net.weights[i], net.biases[i], 2, 1));
    features.push_back(h);
  }
  return features;
}

template <typename T>
TensorT<T> content_loss(const TensorT<T>& f, const TensorT<T>& p) {
  return affine(sq_diff_sum(f, p), static_cast<T>(0.5), T{});
}

template <typename T>
TensorT<T> texture_loss(const std::vector<TensorT<T>>& g, const std::vector<TensorT<T>>& a) {
  if (g.empty() || g.size() != a.size()) {
    throw ValidationError("texture loss: gram list size mismatch");
  }
  TensorT<T> acc = sq_diff_sum(g[0], a[0]);
  for (std::size_t i = 1; i < g.size(); ++i) acc = add(acc, sq_diff_sum(g[i], a[i]));
  return affine(acc, static_cast<T>(0.5), T{});
}

template <typename T>
TensorT<T> content_loss_mean(const TensorT<T>& f, const TensorT<T>& p) {
  const T scale = static_cast<T>(0.5) / static_cast<T>(f.numel());
  return affine(sq_diff_sum(f, p), scale, T{});
}

template <typename T>
TensorT<T> texture_loss_mean(const std::vector<TensorT<T>>& g, const std::vector<TensorT<T>>& a) {
  if (g.empty() || g.size() != a.size()) {
    throw ValidationError("texture loss: gram list size mismatch");
  }
  TensorT<T> acc;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const T scale = static_cast<T>(0.5) / static_cast<T>(g[i].numel());
    TensorT<T> term = affine(sq_diff_sum(g[i], a[i]), scale, T{});
    acc = i == 0 ? term : add(acc, term);
  }
  return affine(acc, T{1} / static_cast<T>(g.size()), T{});
}

template <typename T>
TensorT<T> tv_loss_mean(const TensorT<T>& img) {
  const T scale = T{1} / static_cast<T>(img.numel());
  return affine(tv(img), scale, T{});
}

template <typename T>
TensorT<T> total_loss(const TensorT<T>& content, const TensorT<T>& texture, const TensorT<T>& tvl,
                      const LossWeights& w) {
  const auto check = [](const TensorT<T>& t, const char* name) {
    if (t.numel() != 1) throw ValidationError(std::string(name) + " loss: not a scalar");
    if (!std::isfinite(static_cast<double>(t.values()[0]))) {
      throw ValidationError(std::string(name) + " loss is not finite");
    }
  };
  check(content, "content");
  check(texture, "texture");
  check(tvl, "tv");
  TensorT<T> out = affine(content, static_cast<T>(w.alpha), T{});
  out = add(out, affine(texture, static_cast<T>(w.beta), T{}));
  out = add(out, affine(tvl, static_cast<T>(w.gamma), T{}));
  return out;
}

#define MTT_INSTANTIATE_LOSS(T)                                                               \
  template LossNetworkT<T> make_loss_network<T>(std::uint64_t, const std::vector<int>&);      \
  template std::vector<TensorT<T>> loss_features<T>(const LossNetworkT<T>&,                   \
                                                    const TensorT<T>&);                       \
  template TensorT<T> content_loss<T>(const TensorT<T>&, const TensorT<T>&);                  \
  template TensorT<T> texture_loss<T>(const std::vector<TensorT<T>>&,                         \
                                      const std::vector<TensorT<T>>&);                        \
  template TensorT<T> content_loss_mean<T>(const TensorT<T>&, const TensorT<T>&);             \
  template TensorT<T> texture_loss_mean<T>(const std::vector<TensorT<T>>&,                    \
                                           const std::vector<TensorT<T>>&);                   \
  template TensorT<T> tv_loss_mean<T>(const TensorT<T>&);                                     \
  template TensorT<T> total_loss<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&,  \
                                    const LossWeights&);

MTT_INSTANTIATE_LOSS(float)
MTT_INSTANTIATE_LOSS(double)

#undef MTT_INSTANTIATE_LOSS

}  // namespace mtt::nn
