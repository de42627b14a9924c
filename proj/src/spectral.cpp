#include "mtt/spectral.hpp"

#include <algorithm>
#include <cmath>

#include "fft.hpp"
#include "mtt/errors.hpp"

namespace mtt {

namespace {

constexpr double kOlaEps = 1e-8;

bool power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

// Reflect index without repeating the edge sample (librosa-style): valid for
// any i in [-(len-1), 2 len - 2].
long reflect_index(long i, long len) {
  if (i < 0) return -i;
  if (i >= len) return 2 * len - 2 - i;
  return i;
}

}  // namespace

void StftParams::validate() const {
  if (!power_of_two(n_fft)) throw ValidationError("stft: n_fft must be a positive power of two");
  if (hop <= 0 || hop > n_fft) throw ValidationError("stft: hop must be in (0, n_fft]");
  if (!(window_sigma > 0.0)) throw ValidationError("stft: window_sigma must be positive");
}

void SpectralMeta::validate() const {
  StftParams p{n_fft, hop, window_sigma};
  p.validate();
  if (!(peak_r > 0.0)) throw ValidationError("meta: peak_r must be positive");
  if (!(floor_db < 0.0)) throw ValidationError("meta: floor_db must be negative");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ValidationError("meta: lambda must be in [0, 1]");
  if (sample_rate <= 0) throw ValidationError("meta: sample_rate must be positive");
  if (num_samples <= 0) throw ValidationError("meta: num_samples must be positive");
  if (!(input_peak > 0.0 && input_peak <= 1.0)) {
    throw ValidationError("meta: input_peak must be in (0, 1]");
  }
}

std::vector<double> gaussian_window(int n_fft, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(n_fft));
  const double center = (n_fft - 1) / 2.0;
  for (int i = 0; i < n_fft; ++i) {
    const double z = (i - center) / sigma;
    w[static_cast<std::size_t>(i)] = std::exp(-0.5 * z * z);
  }
  return w;
}

ComplexSpectrogram stft_raw(const std::vector<double>& x, const StftParams& params,
                            int sample_rate) {
  params.validate();
  const long len = static_cast<long>(x.size());
  if (len < params.n_fft || (len - params.n_fft) % params.hop != 0) {
    throw ValidationError("stft_raw: length must be n_fft + k * hop");
  }
  const int frames = static_cast<int>((len - params.n_fft) / params.hop) + 1;
  const int bins = params.n_fft / 2 + 1;

  ComplexSpectrogram spec;
  spec.g = GridT<std::complex<double>>(bins, frames);
  spec.params = params;
  spec.sample_rate = sample_rate;

  const std::vector<double> w = gaussian_window(params.n_fft, params.window_sigma);
  RealFft fft(params.n_fft);
  std::vector<double> frame(static_cast<std::size_t>(params.n_fft));
  std::vector<std::complex<double>> out;
  for (int t = 0; t < frames; ++t) {
    const double* seg = x.data() + static_cast<std::size_t>(t) * params.hop;
    for (int i = 0; i < params.n_fft; ++i) {
      frame[static_cast<std::size_t>(i)] = seg[i] * w[static_cast<std::size_t>(i)];
    }
    fft.forward(frame, out);
    for (int b = 0; b < bins; ++b) spec.g(b, t) = out[static_cast<std::size_t>(b)];
  }
  return spec;
}

std::vector<double> istft_raw(const ComplexSpectrogram& spec) {
  const StftParams& p = spec.params;
  p.validate();
  const int bins = p.n_fft / 2 + 1;
  if (spec.g.rows != bins) throw ValidationError("istft: bin count does not match n_fft");
  const int frames = spec.g.cols;
  if (frames <= 0) throw ValidationError("istft: no frames");

  const long len = static_cast<long>(frames - 1) * p.hop + p.n_fft;
  std::vector<double> acc(static_cast<std::size_t>(len), 0.0);
  std::vector<double> wsum(static_cast<std::size_t>(len), 0.0);

  const std::vector<double> w = gaussian_window(p.n_fft, p.window_sigma);
  RealFft fft(p.n_fft);
  std::vector<std::complex<double>> col(static_cast<std::size_t>(bins));
  std::vector<double> frame;
  for (int t = 0; t < frames; ++t) {
    for (int b = 0; b < bins; ++b) col[static_cast<std::size_t>(b)] = spec.g(b, t);
    fft.inverse(col, frame);
    double* a = acc.data() + static_cast<std::size_t>(t) * p.hop;
    double* s = wsum.data() + static_cast<std::size_t>(t) * p.hop;
    for (int i = 0; i < p.n_fft; ++i) {
      a[i] += w[static_cast<std::size_t>(i)] * frame[static_cast<std::size_t>(i)];
      s[i] += w[static_cast<std::size_t>(i)] * w[static_cast<std::size_t>(i)];
    }
  }
  for (long i = 0; i < len; ++i) {
    if (wsum[static_cast<std::size_t>(i)] < kOlaEps) {
      throw ValidationError("istft: window-square sum below eps; hop/window degenerate");
    }
    acc[static_cast<std::size_t>(i)] /= wsum[static_cast<std::size_t>(i)];
  }
  return acc;
}

ComplexSpectrogram stft(const AudioClip& clip, const StftParams& params) {
  params.validate();
  const long len = clip.num_samples();
  if (len < params.n_fft) throw ValidationError("stft: clip shorter than n_fft");

  const int pad = params.n_fft / 2;
  // Exactly 1 + floor(len/hop) frames: keep hop-aligned coverage and let the
  // reflected tail absorb the remainder.
  const long padded = (len / params.hop) * params.hop + params.n_fft;
  std::vector<double> x(static_cast<std::size_t>(padded));
  for (long i = 0; i < padded; ++i) {
    x[static_cast<std::size_t>(i)] = clip.samples[static_cast<std::size_t>(reflect_index(i - pad, len))];
  }
  return stft_raw(x, params, clip.sample_rate);
}

AudioClip istft(const ComplexSpectrogram& spec) {
  std::vector<double> raw = istft_raw(spec);
  const int pad = spec.params.n_fft / 2;
  const long kept = static_cast<long>(spec.g.cols - 1) * spec.params.hop;
  AudioClip out;
  out.sample_rate = spec.sample_rate;
  out.samples.assign(raw.begin() + pad, raw.begin() + pad + kept);
  return out;
}

MagnitudeSpectrogram magnitude(const ComplexSpectrogram& spec) {
  MagnitudeSpectrogram mag;
  mag.g = Grid(spec.g.rows, spec.g.cols);
  mag.params = spec.params;
  mag.sample_rate = spec.sample_rate;
  for (std::size_t i = 0; i < spec.g.size(); ++i) mag.g.v[i] = std::abs(spec.g.v[i]);
  return mag;
}

DbSpectrogram to_db(const MagnitudeSpectrogram& mag, double floor_db) {
  if (!(floor_db < 0.0)) throw ValidationError("to_db: floor must be negative");
  double r = 0.0;
  for (double v : mag.g.v) r = std::max(r, v);
  if (r <= 0.0) throw ValidationError("to_db: all-zero magnitude");

  DbSpectrogram db;
  db.g = Grid(mag.g.rows, mag.g.cols);
  db.peak_r = r;
  db.params = mag.params;
  db.sample_rate = mag.sample_rate;
  for (std::size_t i = 0; i < mag.g.size(); ++i) {
    const double x = mag.g.v[i];
    db.g.v[i] = (x > 0.0) ? std::max(20.0 * std::log10(x / r), floor_db) : floor_db;
  }
  return db;
}

MagnitudeSpectrogram from_db(const DbSpectrogram& db, double floor_db) {
  if (!(db.peak_r > 0.0)) throw ValidationError("from_db: peak_r must be positive");
  MagnitudeSpectrogram mag;
  mag.g = Grid(db.g.rows, db.g.cols);
  mag.params = db.params;
  mag.sample_rate = db.sample_rate;
  const double gate = floor_db + kSilenceGateEps;
  for (std::size_t i = 0; i < db.g.size(); ++i) {
    const double v = db.g.v[i];
    mag.g.v[i] = (v <= gate) ? 0.0 : db.peak_r * std::pow(10.0, v / 20.0);
  }
  return mag;
}

DbSpectrogram denoise_mask(const DbSpectrogram& db, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ValidationError("denoise: lambda must be in [0, 1]");
  if (db.g.size() == 0) throw ValidationError("denoise: empty spectrogram");
  const double m = *std::min_element(db.g.v.begin(), db.g.v.end());
  const double threshold = lambda * m;
  DbSpectrogram out = db;
  for (double& v : out.g.v) {
    if (v < threshold) v = m;
  }
  return out;
}

std::pair<NormalizedImage, SpectralMeta> normalize01(const DbSpectrogram& db) {
  if (db.g.size() == 0) throw ValidationError("normalize01: empty spectrogram");
  const auto [lo, hi] = std::minmax_element(db.g.v.begin(), db.g.v.end());
  if (*lo == *hi) throw ValidationError("normalize01: constant spectrogram cannot be normalized");
  const double m = *lo;

  NormalizedImage img;
  img.g = Grid(db.g.rows, db.g.cols);
  for (std::size_t i = 0; i < db.g.size(); ++i) img.g.v[i] = 1.0 - db.g.v[i] / m;

  SpectralMeta meta;
  meta.peak_r = db.peak_r;
  meta.floor_db = m;
  meta.n_fft = db.params.n_fft;
  meta.hop = db.params.hop;
  meta.window_sigma = db.params.window_sigma;
  meta.sample_rate = db.sample_rate;
  return {std::move(img), meta};
}

DbSpectrogram denormalize(const NormalizedImage& img, const SpectralMeta& meta) {
  if (!(meta.floor_db < 0.0)) throw ValidationError("denormalize: floor_db must be negative");
  DbSpectrogram db;
  db.g = Grid(img.g.rows, img.g.cols);
  db.peak_r = meta.peak_r;
  db.params = StftParams{meta.n_fft, meta.hop, meta.window_sigma};
  db.sample_rate = meta.sample_rate;
  for (std::size_t i = 0; i < img.g.size(); ++i) {
    db.g.v[i] = meta.floor_db * (1.0 - img.g.v[i]);
  }
  return db;
}

}  // namespace mtt
