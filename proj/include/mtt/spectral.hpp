#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mtt/audio.hpp"

namespace mtt {

// dB value assigned to zero magnitude; every dB grid is clamped here from below.
inline constexpr double kSilenceFloorDb = -100.0;

// Values this close to the floor decode back to magnitude 0 (see from_db).
inline constexpr double kSilenceGateEps = 1e-6;

struct StftParams {
  int n_fft = 2048;
  int hop = 256;
  double window_sigma = 256.0;  // Gaussian std-dev in samples, n_fft / 8

  // Throws ValidationError unless n_fft is a positive power of two,
  // 0 < hop <= n_fft and window_sigma > 0.
  void validate() const;
};

// Dense row-major grid, rows = frequency bins (row 0 = DC), cols = frames.
template <typename T>
struct GridT {
  int rows = 0, cols = 0;
  std::vector<T> v;

  GridT() = default;
  GridT(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, T{}) {}
  T& operator()(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  const T& operator()(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
  std::size_t size() const { return v.size(); }
};

using Grid = GridT<double>;

struct ComplexSpectrogram {
  GridT<std::complex<double>> g;  // (n_fft/2 + 1) x frames
  StftParams params;
  int sample_rate = 0;
};

struct MagnitudeSpectrogram {
  Grid g;  // non-negative
  StftParams params;
  int sample_rate = 0;
};

struct DbSpectrogram {
  Grid g;  // max entry 0 after to_db, min entry >= kSilenceFloorDb
  double peak_r = 0.0;  // linear magnitude that maps to 0 dB
  StftParams params;
  int sample_rate = 0;
};

// Values in [0, 1]; 0 = spectral floor, 1 = peak.
struct NormalizedImage {
  Grid g;
};

// Everything needed to invert an image back to audio. Serialized as the JSON
// sidecar next to each PNG.
struct SpectralMeta {
  double peak_r = 0.0;
  double floor_db = 0.0;   // min dB value that was mapped to image value 0; < 0
  double lambda = 0.0;     // denoise threshold factor used, in [0, 1]
  int n_fft = 0;
  int hop = 0;
  double window_sigma = 0.0;
  int sample_rate = 0;
  long num_samples = 0;    // original clip length, for exact trimming
  double input_peak = 0.0; // original clip peak, restored after reconstruction
  std::string colormap;    // name of the colormap the PNG was rendered with

  void validate() const;  // ValidationError on out-of-range fields
};

// Gaussian analysis window w[i] = exp(-0.5 ((i - (n-1)/2) / sigma)^2).
std::vector<double> gaussian_window(int n_fft, double sigma);

// STFT with reflect padding of n_fft/2 on both ends, hop-spaced frames.
// A clip of L samples yields exactly 1 + floor(L / hop) frames and
// n_fft/2 + 1 bins. Requires L >= n_fft.
ComplexSpectrogram stft(const AudioClip& clip, const StftParams& params);

// Least-squares inverse via window-weighted overlap-add (synthesis window =
// analysis window, normalized by the summed squared window). Strips the
// padding stft added; output length = (frames - 1) * hop. Throws
// ValidationError if the window-square sum underflows eps anywhere in the
// kept range (degenerate hop/window combination).
AudioClip istft(const ComplexSpectrogram& spec);

// Unpadded variants operating on raw sample buffers; these form the exact
// analysis/synthesis pair Griffin-Lim alternates between. stft_raw requires
// (len - n_fft) to be a non-negative multiple of hop.
ComplexSpectrogram stft_raw(const std::vector<double>& x, const StftParams& params,
                            int sample_rate);
std::vector<double> istft_raw(const ComplexSpectrogram& spec);

MagnitudeSpectrogram magnitude(const ComplexSpectrogram& spec);

// 20 log10(x / max), clamped at floor_db. All-zero input -> ValidationError.
DbSpectrogram to_db(const MagnitudeSpectrogram& mag, double floor_db = kSilenceFloorDb);

// Inverse of to_db: max_magnitude * 10^(db/20), except entries within
// kSilenceGateEps of floor_db decode to exactly 0.
MagnitudeSpectrogram from_db(const DbSpectrogram& db, double floor_db = kSilenceFloorDb);

// Threshold denoising: entries strictly below lambda * min(db) are replaced by
// min(db). lambda in [0, 1]; lambda = 1 is the identity, lambda = 0 floors
// everything below 0 dB. Idempotent.
DbSpectrogram denoise_mask(const DbSpectrogram& db, double lambda);

// Affine map of [min, 0] dB onto [0, 1]. Constant input -> ValidationError.
// The returned meta carries floor_db, peak_r and the transform parameters;
// lambda / num_samples / input_peak are left for the pipeline driver to fill.
std::pair<NormalizedImage, SpectralMeta> normalize01(const DbSpectrogram& db);

// Inverse of normalize01 under the given meta.
DbSpectrogram denormalize(const NormalizedImage& img, const SpectralMeta& meta);

}  // namespace mtt
