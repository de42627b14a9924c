#pragma once

#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "mtt/audio.hpp"
#include "mtt/rng.hpp"

namespace testutil {

// Fresh directory under the system temp root, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    dir_ = std::filesystem::temp_directory_path() /
           ("mtt_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(dir_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(dir_, ec);
  }
  const std::filesystem::path& path() const { return dir_; }
  std::filesystem::path operator/(const std::string& name) const { return dir_ / name; }

 private:
  std::filesystem::path dir_;
};

inline mtt::AudioClip sine_clip(double freq, double duration, int rate, double amplitude = 0.5) {
  mtt::AudioClip clip;
  clip.sample_rate = rate;
  const long n = std::llround(duration * rate);
  clip.samples.resize(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) {
    clip.samples[static_cast<std::size_t>(i)] =
        amplitude * std::sin(2.0 * 3.14159265358979323846 * freq * i / rate);
  }
  return clip;
}

inline std::vector<double> random_vector(std::size_t n, std::uint64_t seed, double lo = -1.0,
                                         double hi = 1.0) {
  std::mt19937_64 g(seed);
  std::vector<double> v(n);
  for (double& x : v) x = mtt::uniform_range(g, lo, hi);
  return v;
}

// Magnitude of the DFT of x at exactly hz (Goertzel-style direct sum),
// normalized by n/2 so a unit-amplitude sinusoid at hz reads ~1.
inline double tone_magnitude(const std::vector<double>& x, int rate, double hz) {
  const double w = 2.0 * 3.14159265358979323846 * hz / rate;
  double re = 0.0, im = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    re += x[i] * std::cos(w * static_cast<double>(i));
    im -= x[i] * std::sin(w * static_cast<double>(i));
  }
  return 2.0 * std::hypot(re, im) / static_cast<double>(x.size());
}

struct CliResult {
  int exit_code = -1;
  std::string out;  // stdout + stderr interleaved
};

// Runs the CLI named by MTT_BIN. Returns exit code -1 if popen itself fails.
inline CliResult run_cli(const std::string& args) {
  const char* bin = std::getenv("MTT_BIN");
  if (bin == nullptr) return {-2, "MTT_BIN not set"};
  const std::string cmd = std::string(bin) + " " + args + " 2>&1";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (pipe == nullptr) return {-1, "popen failed"};
  CliResult r;
  char buf[4096];
  std::size_t got;
  while ((got = std::fread(buf, 1, sizeof(buf), pipe)) > 0) r.out.append(buf, got);
  const int status = ::pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void spit(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace testutil
