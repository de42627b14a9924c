#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace mtt {

// Mono audio. Samples are nominally in [-1, 1]; readers scale/clamp into that
// range and peak_normalize enforces it.
struct AudioClip {
  std::vector<double> samples;
  int sample_rate = 0;

  long num_samples() const { return static_cast<long>(samples.size()); }
  double duration() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

// Largest |sample|, 0 for an empty clip.
double peak(const AudioClip& clip);

// Reads a RIFF/WAVE file. Accepts PCM16 and IEEE float32, any channel count
// (channels are averaged to mono). PCM16 scales by 1/32768; float samples are
// clamped to [-1, 1]. Throws IoError (unreadable), UnsupportedFormatError
// (other codecs), TruncatedFileError, FormatError.
AudioClip read_wav(const std::filesystem::path& path);

// Writes mono PCM16 with round-to-nearest. Throws IoError / ValidationError.
void write_wav(const AudioClip& clip, const std::filesystem::path& path);

// Polyphase windowed-sinc resampling (Kaiser window). Exact identity when
// target_rate == clip.sample_rate. Linear in the input by construction.
AudioClip resample(const AudioClip& clip, int target_rate);

// Scales so max |sample| == target_peak (up to rounding), then clamps to
// [-1, 1]. target_peak must be in (0, 1]. All-zero input -> ValidationError.
AudioClip peak_normalize(const AudioClip& clip, double target_peak);

// Voss-McCartney pink noise (16 half-rate rows + one white row), normalized to
// peak 0.9. Length = llround(duration * sample_rate). Deterministic in seed.
AudioClip pink_noise(double duration, int sample_rate, std::uint64_t seed);

}  // namespace mtt
