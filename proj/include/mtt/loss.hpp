#pragma once

#include <cstdint>
#include <vector>

#include "mtt/tensor.hpp"

namespace mtt::nn {

// Fixed random feature extractor standing in for a pretrained classifier:
// four 3x3 stride-2 conv+ReLU stages. Weights are Kaiming-uniform from a
// pinned seed and never trained, so feature targets are reproducible
// bit-for-bit. Content features come from stage 2, texture statistics from
// all four stages.
inline constexpr std::uint64_t kLossNetworkSeed = 0x6d74745f6c6f7373ull;

template <typename T>
struct LossNetworkT {
  std::vector<TensorT<T>> weights;  // stage i: (width_i, width_{i-1}, 3, 3)
  std::vector<TensorT<T>> biases;
  int content_stage = 2;                        // 1-based
  std::vector<int> texture_stages = {1, 2, 3, 4};
};

using LossNetwork = LossNetworkT<float>;

template <typename T>
LossNetworkT<T> make_loss_network(std::uint64_t seed = kLossNetworkSeed,
                                  const std::vector<int>& widths = {16, 32, 64, 128});

// Activations after each stage's ReLU, in stage order. x is (N, 3, H, W).
template <typename T>
std::vector<TensorT<T>> loss_features(const LossNetworkT<T>& net, const TensorT<T>& x);

// Literal quadratic forms (unnormalized):
//   content_loss = 1/2 sum((F - P)^2)
//   texture_loss = 1/2 sum_l sum((G_l - A_l)^2)
template <typename T>
TensorT<T> content_loss(const TensorT<T>& f, const TensorT<T>& p);
template <typename T>
TensorT<T> texture_loss(const std::vector<TensorT<T>>& g, const std::vector<TensorT<T>>& a);

// Scale-stable variants used for training: content averages over elements,
// texture averages the per-stage 1/2 mean((G - A)^2) over stages (with
// normalized Grams), tv_loss divides the squared-difference sum by numel.
template <typename T>
TensorT<T> content_loss_mean(const TensorT<T>& f, const TensorT<T>& p);
template <typename T>
TensorT<T> texture_loss_mean(const std::vector<TensorT<T>>& g, const std::vector<TensorT<T>>& a);
template <typename T>
TensorT<T> tv_loss_mean(const TensorT<T>& img);

struct LossWeights {
  double alpha = 7.5;   // content
  double beta = 500.0;  // texture
  double gamma = 200.0; // total variation
};

// alpha * content + beta * texture + gamma * tv. Throws ValidationError naming
// the offending term if any component is non-finite.
template <typename T>
TensorT<T> total_loss(const TensorT<T>& content, const TensorT<T>& texture, const TensorT<T>& tv,
                      const LossWeights& w);

}  // namespace mtt::nn
