#include <doctest.h>

#include <cmath>
#include <random>

#include "mtt/colormap.hpp"
#include "mtt/errors.hpp"
#include "mtt/rng.hpp"
#include "helpers.hpp"

using namespace mtt;
using testutil::TempDir;

namespace {

NormalizedImage field_from(const std::vector<double>& vals) {
  NormalizedImage img;
  img.g = Grid(1, static_cast<int>(vals.size()));
  img.g.v = vals;
  return img;
}

}  // namespace

TEST_SUITE("colormap") {

TEST_CASE("builtin ramps have the documented entries") {
  const Colormap gray = grayscale_colormap();
  REQUIRE(gray.size() == 256);
  for (int i = 0; i < 256; ++i) {
    for (int c = 0; c < 3; ++c) {
      CHECK(gray.entries[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] == i / 255.0);
    }
  }

  const Colormap fire = fire_colormap();
  REQUIRE(fire.size() == 256);
  auto expect = [&](int i, double r, double g, double b) {
    CHECK(fire.entries[static_cast<std::size_t>(i)][0] == doctest::Approx(r).epsilon(1e-12));
    CHECK(fire.entries[static_cast<std::size_t>(i)][1] == doctest::Approx(g).epsilon(1e-12));
    CHECK(fire.entries[static_cast<std::size_t>(i)][2] == doctest::Approx(b).epsilon(1e-12));
  };
  expect(0, 0.0, 0.0, 0.0);
  expect(85, 255 / 255.0, 0.0, 0.0);
  expect(170, 1.0, 255 / 255.0, 0.0);
  expect(255, 1.0, 1.0, 1.0);
  // Channel sums form the exact ramp 3i/255: the invariant the decoder uses.
  for (int i = 0; i < 256; ++i) {
    CHECK(fire.channel_sum(i) == doctest::Approx(3.0 * i / 255.0).epsilon(1e-12));
  }
}

TEST_CASE("colormap validation") {
  Colormap map;
  map.name = "tiny";
  map.entries = {{0.0, 0.0, 0.0}};
  CHECK_THROWS_AS(map.validate(), ValidationError);  // needs >= 2 entries

  map.entries = {{0.0, 0.0, 0.0}, {0.5, 0.5, 1.5}};
  CHECK_THROWS_AS(map.validate(), ValidationError);  // out of range

  map.entries = {{0.2, 0.2, 0.2}, {0.1, 0.1, 0.1}};
  CHECK_THROWS_AS(map.validate(), ValidationError);  // sums must increase

  map.entries = {{0.0, 0.0, 0.0}, {0.3, 0.2, 0.1}, {1.0, 1.0, 1.0}};
  CHECK_NOTHROW(map.validate());
}

TEST_CASE("apply_colormap picks the nearest entry") {
  const Colormap gray = grayscale_colormap();
  const RgbImage img = apply_colormap(field_from({0.0, 1.0, 0.5, 127.4 / 255.0}), gray);
  CHECK(img.at(0, 0, 0) == 0.0);
  CHECK(img.at(0, 0, 1) == 1.0);
  CHECK(img.at(0, 0, 2) == 128 / 255.0);  // round(127.5) away from zero
  CHECK(img.at(0, 0, 3) == 127 / 255.0);
  CHECK(img.at(1, 0, 3) == img.at(0, 0, 3));  // gray: all planes equal
}

TEST_CASE("every exact entry decodes back to its own level") {
  for (const Colormap& map : {grayscale_colormap(), fire_colormap()}) {
    std::vector<double> levels(256);
    for (int i = 0; i < 256; ++i) levels[static_cast<std::size_t>(i)] = i / 255.0;
    const RgbImage img = apply_colormap(field_from(levels), map);
    const NormalizedImage back = rgb2sc(img, map);
    for (int i = 0; i < 256; ++i) {
      CHECK(back.g.v[static_cast<std::size_t>(i)] == i / 255.0);
    }
  }
}

TEST_CASE("colormap round trip quantizes to the nearest level") {
  // 10^4 random values: encode/decode must land exactly on round(v*255)/255.
  std::mt19937_64 g(123);
  for (const Colormap& map : {grayscale_colormap(), fire_colormap()}) {
    std::vector<double> vals(10000);
    for (double& v : vals) v = uniform_unit(g);
    const RgbImage img = apply_colormap(field_from(vals), map);
    const NormalizedImage back = rgb2sc(img, map);
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double expected = std::lround(vals[i] * 255.0) / 255.0;
      CHECK(back.g.v[i] == expected);
    }
  }
}

TEST_CASE("off-map pixels resolve by channel-sum interval") {
  const Colormap gray = grayscale_colormap();
  RgbImage img(1, 3);
  // Slightly above entry 100 on every channel, but below the 100/101 midpoint.
  for (int p = 0; p < 3; ++p) {
    img.at(p, 0, 0) = 100 / 255.0 + 0.001;
    img.at(p, 0, 1) = 0.0;
    img.at(p, 0, 2) = 2.0;  // out-of-range sums clamp to the last entry
  }
  const NormalizedImage back = rgb2sc(img, gray);
  CHECK(back.g.v[0] == 100 / 255.0);
  CHECK(back.g.v[1] == 0.0);
  CHECK(back.g.v[2] == 1.0);
}

TEST_CASE("colormap files load, validate and fail loudly") {
  TempDir tmp("cmap");
  testutil::spit(tmp / "ok.cmap",
                 "# four levels\n0 0 0\n0.25 0.1 0.0\n0.5 0.5 0.1\n\n1 1 1\n");
  const Colormap map = load_colormap(tmp / "ok.cmap");
  CHECK(map.size() == 4);
  CHECK(map.entries[1][0] == 0.25);

  // Levels are i/(N-1): entry 1 of 4 decodes to 1/3.
  RgbImage img(1, 1);
  img.at(0, 0, 0) = 0.25;
  img.at(1, 0, 0) = 0.1;
  img.at(2, 0, 0) = 0.0;
  CHECK(rgb2sc(img, map).g.v[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  testutil::spit(tmp / "bad_row.cmap", "0 0 0\n0.5 x 0.5\n1 1 1\n");
  CHECK_THROWS_AS(load_colormap(tmp / "bad_row.cmap"), FormatError);

  testutil::spit(tmp / "bad_order.cmap", "0.5 0.5 0.5\n0 0 0\n");
  CHECK_THROWS_AS(load_colormap(tmp / "bad_order.cmap"), ValidationError);

  CHECK_THROWS_AS(load_colormap(tmp / "missing.cmap"), IoError);

  CHECK(resolve_colormap("gray").name == "gray");
  CHECK(resolve_colormap("fire").name == "fire");
  CHECK(resolve_colormap((tmp / "ok.cmap").string()).size() == 4);
}

}  // TEST_SUITE
