#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mtt/tensor.hpp"

namespace mtt::nn {

enum class LayerKind : std::uint8_t {
  Conv = 0,
  ConvTranspose = 1,
  InstanceNorm = 2,
  Relu = 3,
  Tanh = 4,
  Residual = 5,  // conv3-IN-relu-conv3-IN plus identity skip, fixed channel count
};

struct LayerSpec {
  LayerKind kind = LayerKind::Conv;
  int kernel = 0;
  int stride = 1;
  int in_ch = 0;
  int out_ch = 0;
  int output_pad = 0;

  bool operator==(const LayerSpec&) const = default;
};

// Image-to-image transfer net, downsample / residual trunk / upsample:
//   conv9 s1 -> w, IN, relu
//   conv3 s2 -> 2w, IN, relu
//   conv3 s2 -> 4w, IN, relu
//   5 x residual(4w)
//   convT3 s2 -> 2w, IN, relu
//   convT3 s2 -> w, IN, relu
//   convT9 s1 -> 3, tanh
// Stride-1 layers pad to keep size; stride-2 pairs halve then restore via
// output_pad 1, so any H, W divisible by 4 round-trips exactly.
std::vector<LayerSpec> transfer_architecture(int base_width = 32);

template <typename T>
struct TransferModelT {
  std::vector<LayerSpec> layers;
  // Parameters per layer, same order as layers. Conv/ConvTranspose: {w, b};
  // InstanceNorm: {gamma, beta}; Residual: {w1, b1, g1, be1, w2, b2, g2, be2};
  // activations: {}.
  std::vector<std::vector<TensorT<T>>> params;
};

using TransferModel = TransferModelT<float>;

// Kaiming-uniform weights (bound sqrt(6 / fan_in), fan_in = in_ch * k * k),
// zero biases, unit gamma / zero beta. Deterministic in seed.
template <typename T>
TransferModelT<T> init_transfer_model(const std::vector<LayerSpec>& layers, std::uint64_t seed);

// Runs the layer stack. If the stack is non-empty and ends with Tanh, the
// output is rescaled from [-1, 1] to [0, 1]; an empty stack is the identity
// (passthrough fixture). Input (N, 3, H, W) with H, W divisible by 4 for the
// standard architecture.
template <typename T>
TensorT<T> transfer_forward(const TransferModelT<T>& model, const TensorT<T>& x);

// Flat list of every parameter tensor (optimizer order).
template <typename T>
std::vector<TensorT<T>*> parameters(TransferModelT<T>& model);

template <typename T>
void set_parameters_requires_grad(TransferModelT<T>& model, bool rg);

// --- serialization -----------------------------------------------------------
// Binary container: magic "MTTX1", little-endian layer descriptor block,
// float32 parameter blobs, trailing CRC32 over everything after the magic.
// load_model: bad magic -> UnsupportedFormatError, short file ->
// TruncatedFileError, CRC mismatch -> ChecksumError, descriptor/blob
// inconsistencies -> FormatError.
void save_model(const TransferModel& model, const std::filesystem::path& path);
TransferModel load_model(const std::filesystem::path& path);

}  // namespace mtt::nn
