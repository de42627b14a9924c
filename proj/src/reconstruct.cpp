#include "mtt/reconstruct.hpp"

#include <cmath>
#include <complex>

#include "mtt/errors.hpp"
#include "mtt/rng.hpp"

namespace mtt {

namespace {

constexpr double kPi = 3.14159265358979323846;

double frobenius(const Grid& g) {
  double acc = 0.0;
  for (double v : g.v) acc += v * v;
  return std::sqrt(acc);
}

}  // namespace

GlaResult griffin_lim(const MagnitudeSpectrogram& mag, const GlaParams& params) {
  mag.params.validate();
  if (params.iterations < 1) throw ValidationError("griffin_lim: iterations must be >= 1");
  const int bins = mag.params.n_fft / 2 + 1;
  if (mag.g.rows != bins) throw ValidationError("griffin_lim: bin count does not match n_fft");
  for (double v : mag.g.v) {
    if (!(v >= 0.0)) throw ValidationError("griffin_lim: magnitudes must be non-negative");
  }

  const int frames = mag.g.cols;
  const double norm = frobenius(mag.g);

  ComplexSpectrogram s;
  s.g = GridT<std::complex<double>>(bins, frames);
  s.params = mag.params;
  s.sample_rate = mag.sample_rate;

  // Uniform random initial phases. DC and Nyquist rows take a random sign
  // instead, keeping the half-spectrum consistent with a real signal.
  std::mt19937_64 g(params.seed);
  for (int b = 0; b < bins; ++b) {
    const bool real_bin = (b == 0 || b == bins - 1);
    for (int t = 0; t < frames; ++t) {
      const double u = uniform_unit(g);
      const double m = mag.g(b, t);
      if (real_bin) {
        s.g(b, t) = {u < 0.5 ? m : -m, 0.0};
      } else {
        const double phi = -kPi + 2.0 * kPi * u;
        s.g(b, t) = std::polar(m, phi);
      }
    }
  }

  GlaResult result;
  result.convergence.reserve(static_cast<std::size_t>(params.iterations));
  std::vector<double> x;
  for (int it = 0; it < params.iterations; ++it) {
    x = istft_raw(s);
    const ComplexSpectrogram c = stft_raw(x, mag.params, mag.sample_rate);
    double err = 0.0;
    for (std::size_t i = 0; i < c.g.size(); ++i) {
      const double d = std::abs(c.g.v[i]) - mag.g.v[i];
      err += d * d;
    }
    result.convergence.push_back(norm > 0.0 ? std::sqrt(err) / norm : 0.0);
    // Magnitude projection: keep the target magnitudes, adopt the new phases.
    for (std::size_t i = 0; i < c.g.size(); ++i) {
      const double a = std::abs(c.g.v[i]);
      s.g.v[i] = (a > 0.0) ? c.g.v[i] * (mag.g.v[i] / a)
                           : std::complex<double>(mag.g.v[i], 0.0);
    }
  }

  result.clip = istft(s);
  return result;
}

AudioClip img2audio(const RgbImage& rgb, const SpectralMeta& meta, const Colormap& map,
                    const GlaParams& gla) {
  meta.validate();
  const int bins = meta.n_fft / 2 + 1;
  if (rgb.rows != bins) {
    throw ValidationError("img2audio: image has " + std::to_string(rgb.rows) +
                          " rows but meta n_fft implies " + std::to_string(bins));
  }
  const int frames = 1 + static_cast<int>(meta.num_samples / meta.hop);
  if (rgb.cols != frames) {
    throw ValidationError("img2audio: image has " + std::to_string(rgb.cols) +
                          " frames but meta num_samples implies " + std::to_string(frames));
  }

  const NormalizedImage field = rgb2sc(rgb, map);
  const DbSpectrogram db = denormalize(field, meta);
  const MagnitudeSpectrogram mag = from_db(db);

  GlaResult r = griffin_lim(mag, gla);
  AudioClip out = std::move(r.clip);
  out.sample_rate = meta.sample_rate;
  out.samples.resize(static_cast<std::size_t>(meta.num_samples), 0.0);
  return peak_normalize(out, meta.input_peak);
}

}  // namespace mtt
