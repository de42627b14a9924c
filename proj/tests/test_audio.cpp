#include <doctest.h>

#include <cstdint>
#include <cstring>
#include <numeric>

#include "mtt/audio.hpp"
#include "mtt/errors.hpp"
#include "mtt/spectral.hpp"
#include "helpers.hpp"

using namespace mtt;
using testutil::TempDir;

namespace {

void push_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void push_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>(v >> 8));
}

// Minimal PCM16 RIFF/WAVE with the given interleaved samples.
std::string wav_pcm16(int rate, int channels, const std::vector<std::int16_t>& samples) {
  std::string data;
  for (std::int16_t s : samples) push_u16(data, static_cast<std::uint16_t>(s));
  std::string fmt;
  push_u16(fmt, 1);  // PCM
  push_u16(fmt, static_cast<std::uint16_t>(channels));
  push_u32(fmt, static_cast<std::uint32_t>(rate));
  push_u32(fmt, static_cast<std::uint32_t>(rate * channels * 2));
  push_u16(fmt, static_cast<std::uint16_t>(channels * 2));
  push_u16(fmt, 16);
  std::string s = "RIFF";
  push_u32(s, static_cast<std::uint32_t>(4 + 8 + fmt.size() + 8 + data.size()));
  s += "WAVE";
  s += "fmt ";
  push_u32(s, static_cast<std::uint32_t>(fmt.size()));
  s += fmt;
  s += "data";
  push_u32(s, static_cast<std::uint32_t>(data.size()));
  s += data;
  return s;
}

}  // namespace

TEST_SUITE("audio") {

TEST_CASE("pcm16 bytes decode with 1/32768 scaling") {
  TempDir tmp("wav");
  testutil::spit(tmp / "a.wav", wav_pcm16(8000, 1, {0, 16384, -16384, -32768, 32767}));
  const AudioClip clip = read_wav(tmp / "a.wav");
  REQUIRE(clip.sample_rate == 8000);
  REQUIRE(clip.num_samples() == 5);
  CHECK(clip.samples[0] == 0.0);
  CHECK(clip.samples[1] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(clip.samples[2] == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(clip.samples[3] == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(clip.samples[4] == doctest::Approx(32767.0 / 32768.0).epsilon(1e-12));
}

TEST_CASE("stereo channels average to mono") {
  TempDir tmp("wav");
  // Frames: (0.5, -0.5) -> 0, (0.25, 0.25) -> 0.25.
  testutil::spit(tmp / "s.wav", wav_pcm16(44100, 2, {16384, -16384, 8192, 8192}));
  const AudioClip clip = read_wav(tmp / "s.wav");
  REQUIRE(clip.num_samples() == 2);
  CHECK(clip.samples[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(clip.samples[1] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("float32 wav decodes and clamps") {
  TempDir tmp("wav");
  std::string fmt;
  push_u16(fmt, 3);  // IEEE float
  push_u16(fmt, 1);
  push_u32(fmt, 22050);
  push_u32(fmt, 22050 * 4);
  push_u16(fmt, 4);
  push_u16(fmt, 32);
  std::string data;
  const float vals[3] = {0.25f, -2.0f, 1.5f};
  for (float v : vals) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    push_u32(data, bits);
  }
  std::string s = "RIFF";
  push_u32(s, static_cast<std::uint32_t>(4 + 8 + fmt.size() + 8 + data.size()));
  s += "WAVE";
  s += "fmt ";
  push_u32(s, static_cast<std::uint32_t>(fmt.size()));
  s += fmt;
  s += "data";
  push_u32(s, static_cast<std::uint32_t>(data.size()));
  s += data;
  testutil::spit(tmp / "f.wav", s);

  const AudioClip clip = read_wav(tmp / "f.wav");
  REQUIRE(clip.num_samples() == 3);
  CHECK(clip.samples[0] == doctest::Approx(0.25).epsilon(1e-7));
  CHECK(clip.samples[1] == -1.0);
  CHECK(clip.samples[2] == 1.0);
}

TEST_CASE("write/read round trip is within the PCM16 quantization bound") {
  TempDir tmp("wav");
  AudioClip clip;
  clip.sample_rate = 22050;
  clip.samples = testutil::random_vector(500, 42);
  write_wav(clip, tmp / "r.wav");
  const AudioClip back = read_wav(tmp / "r.wav");
  REQUIRE(back.num_samples() == clip.num_samples());
  REQUIRE(back.sample_rate == clip.sample_rate);
  // Encode scales by 32767, decode divides by 32768, so the worst case is
  // (|x| + 0.5) / 32768.
  for (std::size_t i = 0; i < clip.samples.size(); ++i) {
    CHECK(std::abs(back.samples[i] - clip.samples[i]) <=
          (std::abs(clip.samples[i]) + 0.5) / 32768.0);
  }
}

TEST_CASE("wav error taxonomy") {
  TempDir tmp("wav");
  CHECK_THROWS_AS(read_wav(tmp / "missing.wav"), IoError);

  std::string good = wav_pcm16(8000, 1, {1, 2, 3, 4});

  SUBCASE("not riff") {
    std::string bad = good;
    bad[0] = 'X';
    testutil::spit(tmp / "bad.wav", bad);
    CHECK_THROWS_AS(read_wav(tmp / "bad.wav"), FormatError);
  }
  SUBCASE("unsupported codec") {
    std::string bad = good;
    bad[20] = 7;  // mu-law format tag
    testutil::spit(tmp / "bad.wav", bad);
    CHECK_THROWS_AS(read_wav(tmp / "bad.wav"), UnsupportedFormatError);
  }
  SUBCASE("fmt chunk cut short") {
    // Keep the header and the fmt chunk prefix, drop the fmt payload tail.
    std::string bad = good.substr(0, 24);
    testutil::spit(tmp / "bad.wav", bad);
    CHECK_THROWS_AS(read_wav(tmp / "bad.wav"), TruncatedFileError);
  }
  SUBCASE("short data chunk is tolerated") {
    // Sloppy writers overstate the data length; the reader keeps what exists.
    std::string bad = good.substr(0, good.size() - 2);
    testutil::spit(tmp / "bad.wav", bad);
    CHECK(read_wav(tmp / "bad.wav").num_samples() == 3);
  }
}

TEST_CASE("resample identity at equal rates") {
  AudioClip clip = testutil::sine_clip(440.0, 0.1, 22050);
  const AudioClip out = resample(clip, 22050);
  CHECK(out.samples == clip.samples);
}

TEST_CASE("resample preserves tone frequency and amplitude") {
  const double freq = 440.0;
  const AudioClip clip = testutil::sine_clip(freq, 0.5, 22050, 0.5);
  for (int target : {44100, 16000}) {
    const AudioClip out = resample(clip, target);
    CHECK(out.sample_rate == target);
    CHECK(std::abs(out.num_samples() - std::llround(0.5 * target)) <= 1);
    // Skip edge transients; measure the dominant tone in the interior.
    std::vector<double> mid(out.samples.begin() + out.num_samples() / 4,
                            out.samples.end() - out.num_samples() / 4);
    CHECK(testutil::tone_magnitude(mid, target, freq) == doctest::Approx(0.5).epsilon(0.02));
    CHECK(testutil::tone_magnitude(mid, target, freq * 3) < 0.01);
  }
}

TEST_CASE("resample is linear") {
  const std::vector<double> a = testutil::random_vector(2000, 1);
  const std::vector<double> b = testutil::random_vector(2000, 2);
  AudioClip ca{a, 22050}, cb{b, 22050}, cab;
  cab.sample_rate = 22050;
  for (std::size_t i = 0; i < a.size(); ++i) cab.samples.push_back(a[i] + b[i]);
  const AudioClip ra = resample(ca, 16000), rb = resample(cb, 16000), rab = resample(cab, 16000);
  REQUIRE(ra.num_samples() == rab.num_samples());
  for (std::size_t i = 0; i < rab.samples.size(); ++i) {
    CHECK(rab.samples[i] == doctest::Approx(ra.samples[i] + rb.samples[i]).epsilon(1e-9));
  }
}

TEST_CASE("peak_normalize") {
  AudioClip clip{{0.1, -0.4, 0.2}, 8000};
  const AudioClip out = peak_normalize(clip, 0.9);
  CHECK(peak(out) == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(out.samples[0] == doctest::Approx(0.1 * 0.9 / 0.4).epsilon(1e-12));

  CHECK_THROWS_AS(peak_normalize(AudioClip{{0.0, 0.0}, 8000}, 0.5), ValidationError);
  CHECK_THROWS_AS(peak_normalize(clip, 0.0), ValidationError);
  CHECK_THROWS_AS(peak_normalize(clip, 1.5), ValidationError);
}

TEST_CASE("pink noise shape, determinism, peak") {
  const AudioClip a = pink_noise(1.25, 22050, 7);
  CHECK(a.num_samples() == std::llround(1.25 * 22050));
  CHECK(peak(a) == doctest::Approx(0.9).epsilon(1e-12));
  const AudioClip b = pink_noise(1.25, 22050, 7);
  CHECK(a.samples == b.samples);
  const AudioClip c = pink_noise(1.25, 22050, 8);
  CHECK(a.samples != c.samples);
}

TEST_CASE("pink noise falls off about 3 dB per octave") {
  const AudioClip clip = pink_noise(30.0, 22050, 3);
  StftParams params{2048, 512, 256.0};
  const ComplexSpectrogram spec = stft(clip, params);
  const double bin_hz = 22050.0 / 2048.0;
  // Mean power over each octave band, averaged across frames.
  auto band_power = [&](double lo, double hi) {
    const int b0 = static_cast<int>(std::ceil(lo / bin_hz));
    const int b1 = static_cast<int>(std::floor(hi / bin_hz));
    double acc = 0.0;
    long count = 0;
    for (int b = b0; b <= b1; ++b) {
      for (int t = 0; t < spec.g.cols; ++t) {
        acc += std::norm(spec.g(b, t));
        ++count;
      }
    }
    return acc / static_cast<double>(count);
  };
  const double bands[5] = {172.0, 344.0, 689.0, 1378.0, 2756.0};
  for (int k = 0; k + 1 < 5; ++k) {
    const double p0 = band_power(bands[k], 2 * bands[k]);
    const double p1 = band_power(bands[k + 1], 2 * bands[k + 1]);
    const double drop_db = 10.0 * std::log10(p0 / p1);
    CHECK(drop_db > 1.5);
    CHECK(drop_db < 4.5);
  }
}

}  // TEST_SUITE
