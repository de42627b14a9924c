#include "mtt/colormap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mtt/errors.hpp"

namespace mtt {

namespace {

// Slack for the cumulative-subtraction sign test. Absorbs float dust when a
// pixel sits exactly on an entry boundary, and keeps the 3.0 done-sentinel out
// of reach of later subtractions (total remaining delta never exceeds 3).
constexpr double kSumTolerance = 1e-9;

}  // namespace

void Colormap::validate() const {
  if (size() < 2) throw ValidationError("colormap needs at least 2 entries: " + name);
  for (int i = 0; i < size(); ++i) {
    for (double c : entries[static_cast<std::size_t>(i)]) {
      if (!(c >= 0.0 && c <= 1.0)) {
        throw ValidationError("colormap channel out of [0, 1] at entry " + std::to_string(i) +
                              ": " + name);
      }
    }
    if (i > 0 && !(channel_sum(i) > channel_sum(i - 1))) {
      throw ValidationError("colormap channel sums not strictly increasing at entry " +
                            std::to_string(i) + ": " + name);
    }
  }
}

Colormap grayscale_colormap() {
  Colormap map;
  map.name = "gray";
  map.entries.resize(256);
  for (int i = 0; i < 256; ++i) {
    const double v = i / 255.0;
    map.entries[static_cast<std::size_t>(i)] = {v, v, v};
  }
  return map;
}

Colormap fire_colormap() {
  Colormap map;
  map.name = "fire";
  map.entries.resize(256);
  for (int i = 0; i < 256; ++i) {
    // Integer construction keeps every channel representable as byte/255, so
    // the entries survive an 8-bit PNG round trip bit-exactly.
    const int r = std::min(3 * i, 255);
    const int g = std::clamp(3 * i - 255, 0, 255);
    const int b = std::clamp(3 * i - 510, 0, 255);
    map.entries[static_cast<std::size_t>(i)] = {r / 255.0, g / 255.0, b / 255.0};
  }
  return map;
}

Colormap load_colormap(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open colormap file: " + path.string());
  Colormap map;
  map.name = path.string();
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream row(line);
    double r, g, b;
    if (!(row >> r)) continue;  // blank / comment-only line
    if (!(row >> g >> b)) {
      throw FormatError("colormap " + path.string() + " line " + std::to_string(lineno) +
                        ": expected three floats");
    }
    std::string trailing;
    if (row >> trailing) {
      throw FormatError("colormap " + path.string() + " line " + std::to_string(lineno) +
                        ": trailing tokens");
    }
    map.entries.push_back({r, g, b});
  }
  map.validate();
  return map;
}

Colormap resolve_colormap(const std::string& spec) {
  if (spec == "gray" || spec == "grayscale") return grayscale_colormap();
  if (spec == "fire") return fire_colormap();
  return load_colormap(spec);
}

RgbImage apply_colormap(const NormalizedImage& img, const Colormap& map) {
  map.validate();
  const int n = map.size();
  RgbImage out(img.g.rows, img.g.cols);
  const std::size_t plane = out.plane_size();
  for (std::size_t i = 0; i < plane; ++i) {
    const double v = img.g.v[i];
    int idx = static_cast<int>(std::lround(v * (n - 1)));
    idx = std::clamp(idx, 0, n - 1);
    const auto& e = map.entries[static_cast<std::size_t>(idx)];
    out.v[i] = e[0];
    out.v[plane + i] = e[1];
    out.v[2 * plane + i] = e[2];
  }
  return out;
}

NormalizedImage rgb2sc(const RgbImage& rgb, const Colormap& map) {
  map.validate();
  const int n = map.size();
  std::vector<double> delta(static_cast<std::size_t>(n - 1));
  for (int i = 0; i + 1 < n; ++i) {
    delta[static_cast<std::size_t>(i)] = map.channel_sum(i + 1) - map.channel_sum(i);
  }
  const double base = map.channel_sum(0);
  const double denom = n - 1;

  NormalizedImage out;
  out.g = Grid(rgb.rows, rgb.cols);
  const std::size_t plane = rgb.plane_size();
  for (std::size_t i = 0; i < plane; ++i) {
    // Remainder starts at the channel sum relative to the first entry; the
    // all-ones init means "top level unless some cumulative sum overtakes us".
    double rem = rgb.v[i] + rgb.v[plane + i] + rgb.v[2 * plane + i] - base;
    double level = 1.0;
    for (int k = 0; k + 1 < n; ++k) {
      rem -= delta[static_cast<std::size_t>(k)];
      if (rem < -kSumTolerance) {
        level = k / denom;
        // Sentinel assignment in the subtract-until-negative scheme; with the
        // remainder parked at 3 no later delta can re-trigger, so stop here.
        rem = 3.0;
        break;
      }
    }
    out.g.v[i] = level;
  }
  return out;
}

}  // namespace mtt
