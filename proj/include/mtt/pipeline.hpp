#pragma once

#include "mtt/colormap.hpp"
#include "mtt/network.hpp"
#include "mtt/reconstruct.hpp"
#include "mtt/spectral.hpp"
#include "mtt/tensor.hpp"

namespace mtt {

// Forward conversion settings. The default geometry turns 10 s at 22050 Hz
// into a 1025 x 862 image.
struct PipelineConfig {
  int sample_rate = 22050;
  StftParams stft;
  double lambda = 0.618;
};

struct ConvertResult {
  NormalizedImage field;
  RgbImage rgb;
  SpectralMeta meta;
};

// clip -> STFT -> |.| -> dB -> threshold mask -> [0, 1] -> colormap.
// The clip must already be at cfg.sample_rate (callers resample on ingest);
// meta is fully populated including num_samples / input_peak / colormap name.
ConvertResult audio2img(const AudioClip& clip, const PipelineConfig& cfg, const Colormap& map);

// --- network bridge -----------------------------------------------------------

// (rows, cols) image -> (1, 3, rows, cols) float tensor and back. The tensor
// route clamps into [0, 1] on the way out.
nn::Tensor image_to_tensor(const RgbImage& img);
nn::Tensor images_to_batch(const std::vector<RgbImage>& imgs);
RgbImage tensor_to_image(const nn::Tensor& t, int batch_index = 0);

// Pad at the high edge by mirroring interior rows/cols (no edge repeat);
// target dims must be >= current and the pad must fit the mirror range.
RgbImage reflect_pad(const RgbImage& img, int target_rows, int target_cols);
RgbImage crop(const RgbImage& img, int rows, int cols);
RgbImage crop_at(const RgbImage& img, int row0, int col0, int rows, int cols);

int pad_to_multiple(int n, int multiple);

// Gradient-free inference: reflect-pad to the stride multiple the net needs,
// forward, crop back to the original geometry.
RgbImage run_transfer(const nn::TransferModel& model, const RgbImage& img);

}  // namespace mtt
