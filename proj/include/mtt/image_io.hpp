#pragma once

#include <filesystem>

#include "mtt/colormap.hpp"
#include "mtt/spectral.hpp"

namespace mtt {

// 8-bit RGB PNG, quantized with round-to-nearest. The file is written with
// the highest frequency bin as the top scanline (row 0 of RgbImage = lowest
// bin = bottom of the picture), so spectrograms read the usual way up.
void write_png_rgb8(const RgbImage& img, const std::filesystem::path& path);

// Inverse of write_png_rgb8 (values byte/255, vertical flip undone).
// Non-PNG bytes -> FormatError; 16-bit/palette inputs are converted to 8-bit
// RGB by libpng.
RgbImage read_png_rgb8(const std::filesystem::path& path);

// JSON sidecar carrying SpectralMeta. Fixed keys: peak_r, floor_db, lambda,
// n_fft, hop, window_sigma, sample_rate, num_samples, input_peak, plus
// optional "colormap".
void write_meta(const SpectralMeta& meta, const std::filesystem::path& path);

// Missing/mistyped keys -> FormatError; out-of-range values -> ValidationError.
SpectralMeta read_meta(const std::filesystem::path& path);

}  // namespace mtt
