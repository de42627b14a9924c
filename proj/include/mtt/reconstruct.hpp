#pragma once

#include <cstdint>
#include <vector>

#include "mtt/colormap.hpp"
#include "mtt/spectral.hpp"

namespace mtt {

struct GlaParams {
  int iterations = 100;
  std::uint64_t seed = 0;
};

struct GlaResult {
  AudioClip clip;                   // length (frames - 1) * hop
  std::vector<double> convergence;  // one entry per iteration, non-increasing
};

// Griffin-Lim alternating projection from a magnitude target. Phases start
// uniform in [-pi, pi) (seeded); each iteration resynthesizes, re-analyzes and
// keeps the new phases under the fixed magnitudes. The convergence measure is
// || |STFT(x_k)| - M ||_F / ||M||_F, which the least-squares analysis/synthesis
// pair makes non-increasing. All-zero magnitudes reproduce silence with
// convergence 0. iterations must be >= 1.
GlaResult griffin_lim(const MagnitudeSpectrogram& mag, const GlaParams& params);

// Full inverse pipeline: RGB image -> scalar field -> dB -> magnitude ->
// Griffin-Lim -> trim/zero-pad to meta.num_samples -> peak_normalize to
// meta.input_peak. Geometry mismatches between image and meta -> ValidationError.
// An all-floor (silent) image surfaces peak_normalize's all-zero error.
AudioClip img2audio(const RgbImage& rgb, const SpectralMeta& meta, const Colormap& map,
                    const GlaParams& gla);

}  // namespace mtt
