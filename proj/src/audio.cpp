#include "mtt/audio.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "mtt/errors.hpp"
#include "mtt/rng.hpp"

namespace mtt {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 24) & 0xff));
}

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
}

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = kPi * x;
  return std::sin(px) / px;
}

// Modified Bessel function of the first kind, order zero. Power series; the
// argument never exceeds ~10 here so convergence is fast.
double bessel_i0(double x) {
  const double half = 0.5 * x;
  double term = 1.0, sum = 1.0;
  for (int k = 1; k < 64; ++k) {
    term *= (half / k) * (half / k);
    sum += term;
    if (term < sum * 1e-14) break;
  }
  return sum;
}

}  // namespace

double peak(const AudioClip& clip) {
  double p = 0.0;
  for (double s : clip.samples) p = std::max(p, std::abs(s));
  return p;
}

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open wav file: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure: " + path.string());

  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw FormatError("not a RIFF/WAVE file: " + path.string());
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
    std::uint32_t len = read_u32(bytes.data() + pos + 4);
    pos += 8;
    if (pos + len > bytes.size()) {
      // data chunk length sometimes overshoots in sloppy writers; for data we
      // take what is there, anything else is a hard truncation.
      if (std::memcmp(id, "data", 4) == 0) {
        len = static_cast<std::uint32_t>(bytes.size() - pos);
      } else {
        throw TruncatedFileError("chunk extends past end of file: " + path.string());
      }
    }
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (len < 16) throw FormatError("fmt chunk too short: " + path.string());
      const unsigned char* f = bytes.data() + pos;
      format = read_u16(f);
      channels = read_u16(f + 2);
      rate = read_u32(f + 4);
      bits = read_u16(f + 14);
      if (format == 0xfffe && len >= 40) {
        // WAVE_FORMAT_EXTENSIBLE: the real codec is the first two bytes of the
        // 16-byte SubFormat GUID.
        format = read_u16(f + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = bytes.data() + pos;
      data_len = len;
    }
    pos += len + (len & 1);  // chunks are word-aligned
  }

  if (!have_fmt) throw FormatError("missing fmt chunk: " + path.string());
  if (data == nullptr) throw FormatError("missing data chunk: " + path.string());
  if (channels == 0) throw FormatError("zero channels: " + path.string());
  if (rate == 0) throw FormatError("zero sample rate: " + path.string());

  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);

  if (format == 1 && bits == 16) {
    const std::size_t frame = 2u * channels;
    const std::size_t n = data_len / frame;
    clip.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (unsigned c = 0; c < channels; ++c) {
        const unsigned char* p = data + i * frame + 2u * c;
        std::int16_t v = static_cast<std::int16_t>(p[0] | (p[1] << 8));
        acc += static_cast<double>(v) / 32768.0;
      }
      clip.samples[i] = acc / channels;
    }
  } else if (format == 3 && bits == 32) {
    const std::size_t frame = 4u * channels;
    const std::size_t n = data_len / frame;
    clip.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (unsigned c = 0; c < channels; ++c) {
        float v;
        std::memcpy(&v, data + i * frame + 4u * c, 4);
        acc += std::clamp(static_cast<double>(v), -1.0, 1.0);
      }
      clip.samples[i] = acc / channels;
    }
  } else {
    throw UnsupportedFormatError("unsupported wav encoding (format " + std::to_string(format) +
                                 ", " + std::to_string(bits) + " bit): " + path.string());
  }
  return clip;
}

void write_wav(const AudioClip& clip, const std::filesystem::path& path) {
  if (clip.sample_rate <= 0) throw ValidationError("write_wav: sample rate must be positive");
  if (clip.samples.empty()) throw ValidationError("write_wav: empty clip");

  const std::uint32_t n = static_cast<std::uint32_t>(clip.samples.size());
  std::vector<unsigned char> out;
  out.reserve(44 + 2u * n);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 36 + 2 * n);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, 2 * n);
  for (double s : clip.samples) {
    double scaled = std::clamp(s, -1.0, 1.0) * 32767.0;
    auto v = static_cast<std::int16_t>(std::lround(scaled));
    put_u16(out, static_cast<std::uint16_t>(v));
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failure: " + path.string());
}

AudioClip resample(const AudioClip& clip, int target_rate) {
  if (clip.sample_rate <= 0) throw ValidationError("resample: source rate must be positive");
  if (target_rate <= 0) throw ValidationError("resample: target rate must be positive");
  if (target_rate == clip.sample_rate) return clip;

  const long n_in = clip.num_samples();
  const long n_out = std::lround(static_cast<double>(n_in) * target_rate / clip.sample_rate);
  AudioClip out;
  out.sample_rate = target_rate;
  out.samples.assign(static_cast<std::size_t>(n_out), 0.0);
  if (n_in == 0) return out;

  // Anti-aliasing cutoff relative to the source Nyquist, with a little rolloff
  // headroom for the finite window.
  const double ratio = static_cast<double>(target_rate) / clip.sample_rate;
  const double cutoff = 0.945 * std::min(1.0, ratio);
  const int half_lobes = 32;
  const double half_width = half_lobes / cutoff;
  const double beta = 8.6;
  const double inv_i0_beta = 1.0 / bessel_i0(beta);
  const double step = static_cast<double>(clip.sample_rate) / target_rate;

  for (long i = 0; i < n_out; ++i) {
    const double t = i * step;
    const long j0 = std::max<long>(0, static_cast<long>(std::ceil(t - half_width)));
    const long j1 = std::min<long>(n_in - 1, static_cast<long>(std::floor(t + half_width)));
    double acc = 0.0;
    for (long j = j0; j <= j1; ++j) {
      const double d = j - t;
      const double z = d / half_width;
      const double kaiser = bessel_i0(beta * std::sqrt(std::max(0.0, 1.0 - z * z))) * inv_i0_beta;
      acc += clip.samples[static_cast<std::size_t>(j)] * cutoff * sinc(cutoff * d) * kaiser;
    }
    out.samples[static_cast<std::size_t>(i)] = acc;
  }
  return out;
}

AudioClip peak_normalize(const AudioClip& clip, double target_peak) {
  if (!(target_peak > 0.0) || target_peak > 1.0) {
    throw ValidationError("peak_normalize: target peak must be in (0, 1]");
  }
  const double p = peak(clip);
  if (p == 0.0) throw ValidationError("peak_normalize: all-zero signal");
  const double gain = target_peak / p;
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.samples.resize(clip.samples.size());
  for (std::size_t i = 0; i < clip.samples.size(); ++i) {
    out.samples[i] = std::clamp(clip.samples[i] * gain, -1.0, 1.0);
  }
  return out;
}

AudioClip pink_noise(double duration, int sample_rate, std::uint64_t seed) {
  if (!(duration > 0.0)) throw ValidationError("pink_noise: duration must be positive");
  if (sample_rate <= 0) throw ValidationError("pink_noise: sample rate must be positive");
  const long n = std::llround(duration * sample_rate);

  std::mt19937_64 g(seed);
  constexpr int kRows = 16;
  std::array<double, kRows> rows{};
  for (auto& r : rows) r = uniform_range(g, -1.0, 1.0);

  AudioClip clip;
  clip.sample_rate = sample_rate;
  clip.samples.resize(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) {
    // Row k refreshes every 2^k samples: count trailing zeros of the tick.
    const std::uint64_t tick = static_cast<std::uint64_t>(i) + 1;
    int k = 0;
    while (k < kRows - 1 && ((tick >> k) & 1) == 0) ++k;
    rows[static_cast<std::size_t>(k)] = uniform_range(g, -1.0, 1.0);
    double sum = uniform_range(g, -1.0, 1.0);  // white row, refreshed every sample
    for (double r : rows) sum += r;
    clip.samples[static_cast<std::size_t>(i)] = sum / (kRows + 1);
  }
  return peak_normalize(clip, 0.9);
}

}  // namespace mtt
