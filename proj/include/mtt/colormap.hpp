#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "mtt/spectral.hpp"

namespace mtt {

// Discrete colormap: N >= 2 RGB entries in [0, 1] whose per-entry channel sums
// r+g+b are strictly increasing. Monotone sums are what make the scalar
// recoverable from an RGB pixel by cumulative subtraction.
struct Colormap {
  std::string name;
  std::vector<std::array<double, 3>> entries;

  int size() const { return static_cast<int>(entries.size()); }
  double channel_sum(int i) const {
    return entries[static_cast<std::size_t>(i)][0] + entries[static_cast<std::size_t>(i)][1] +
           entries[static_cast<std::size_t>(i)][2];
  }
  // ValidationError on size/range/monotonicity violations.
  void validate() const;
};

// 256-entry linear gray ramp (i/255 on every channel).
Colormap grayscale_colormap();

// 256-entry black->red->yellow->white ramp ("fire"); channel sums 3i/255.
Colormap fire_colormap();

// "gray" or "fire" -> builtin; anything else is treated as a path to a
// colormap file: one "r g b" row per line (floats in [0, 1]), '#' comments.
// Malformed rows -> FormatError; monotonicity/range violations ->
// ValidationError; unreadable file -> IoError.
Colormap load_colormap(const std::filesystem::path& path);
Colormap resolve_colormap(const std::string& spec);

// Planar RGB raster, values in [0, 1]. Plane-major layout: v[(p * rows + r) *
// cols + c] for plane p in {0 = R, 1 = G, 2 = B}. Row 0 = lowest frequency bin.
struct RgbImage {
  int rows = 0, cols = 0;
  std::vector<double> v;

  RgbImage() = default;
  RgbImage(int r, int c) : rows(r), cols(c), v(3 * static_cast<std::size_t>(r) * c, 0.0) {}
  double& at(int plane, int r, int c) {
    return v[(static_cast<std::size_t>(plane) * rows + r) * cols + c];
  }
  double at(int plane, int r, int c) const {
    return v[(static_cast<std::size_t>(plane) * rows + r) * cols + c];
  }
  std::size_t plane_size() const { return static_cast<std::size_t>(rows) * cols; }
};

// Nearest-entry lookup: index = round(value * (N - 1)), clamped.
RgbImage apply_colormap(const NormalizedImage& img, const Colormap& map);

// Inverse lookup by cumulative subtraction of channel-sum deltas: recovers
// i / (N - 1) for every pixel that sits exactly on a colormap entry, and the
// level whose cumulative sum first exceeds r+g+b otherwise. Out-of-range
// channel sums clamp to the first/last entry.
NormalizedImage rgb2sc(const RgbImage& rgb, const Colormap& map);

}  // namespace mtt
