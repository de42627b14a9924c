#include <doctest.h>

#include <zlib.h>

#include <cmath>
#include <cstdint>

#include "mtt/errors.hpp"
#include "mtt/network.hpp"
#include "helpers.hpp"

using namespace mtt::nn;
using mtt::ChecksumError;
using mtt::FormatError;
using mtt::IoError;
using mtt::TruncatedFileError;
using mtt::UnsupportedFormatError;
using mtt::ValidationError;
using testutil::TempDir;

namespace {

Tensor random_image(int n, int h, int w, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::vector<float> v(static_cast<std::size_t>(n) * 3 * h * w);
  for (float& x : v) x = static_cast<float>(mtt::uniform_unit(g));
  return Tensor::from({n, 3, h, w}, std::move(v));
}

// Rewrites the stored CRC so descriptor tampering reaches the parser instead
// of tripping the checksum.
void fixup_crc(const std::filesystem::path& path) {
  std::string bytes = testutil::slurp(path);
  REQUIRE(bytes.size() > 9);
  const std::size_t payload = bytes.size() - 5 - 4;  // magic .. before trailing crc
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + 5;
  const std::uint32_t crc =
      static_cast<std::uint32_t>(::crc32(0L, p, static_cast<uInt>(payload)));
  for (int i = 0; i < 4; ++i) {
    bytes[bytes.size() - 4 + static_cast<std::size_t>(i)] =
        static_cast<char>((crc >> (8 * i)) & 0xff);
  }
  testutil::spit(path, bytes);
}

}  // namespace

TEST_SUITE("network") {

TEST_CASE("architecture lays out the documented stack") {
  const auto layers = transfer_architecture(8);
  REQUIRE(layers.size() == 22);

  CHECK(layers[0] == LayerSpec{LayerKind::Conv, 9, 1, 3, 8, 0});
  CHECK(layers[1].kind == LayerKind::InstanceNorm);
  CHECK(layers[2].kind == LayerKind::Relu);
  CHECK(layers[3] == LayerSpec{LayerKind::Conv, 3, 2, 8, 16, 0});
  CHECK(layers[6] == LayerSpec{LayerKind::Conv, 3, 2, 16, 32, 0});
  for (int i = 9; i < 14; ++i) {
    CHECK(layers[static_cast<std::size_t>(i)].kind == LayerKind::Residual);
    CHECK(layers[static_cast<std::size_t>(i)].in_ch == 32);
    CHECK(layers[static_cast<std::size_t>(i)].out_ch == 32);
  }
  CHECK(layers[14] == LayerSpec{LayerKind::ConvTranspose, 3, 2, 32, 16, 1});
  CHECK(layers[17] == LayerSpec{LayerKind::ConvTranspose, 3, 2, 16, 8, 1});
  CHECK(layers[20] == LayerSpec{LayerKind::ConvTranspose, 9, 1, 8, 3, 0});
  CHECK(layers[21].kind == LayerKind::Tanh);
}

TEST_CASE("initialization is bounded, zero-biased and seeded") {
  const auto layers = transfer_architecture(4);
  const TransferModel a = init_transfer_model<float>(layers, 7);
  const TransferModel b = init_transfer_model<float>(layers, 7);
  const TransferModel c = init_transfer_model<float>(layers, 8);

  REQUIRE(a.params.size() == layers.size());
  bool any_differs = false;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    REQUIRE(a.params[l].size() == b.params[l].size());
    for (std::size_t t = 0; t < a.params[l].size(); ++t) {
      CHECK(a.params[l][t].values() == b.params[l][t].values());
      if (a.params[l][t].values() != c.params[l][t].values()) any_differs = true;
    }
  }
  CHECK(any_differs);

  // First conv: fan_in = 3 * 9 * 9.
  const double bound = std::sqrt(6.0 / (3 * 9 * 9));
  double max_abs = 0.0;
  for (float v : a.params[0][0].values()) max_abs = std::max(max_abs, std::abs(double(v)));
  CHECK(max_abs <= bound);
  CHECK(max_abs > 0.5 * bound);  // not degenerate
  for (float v : a.params[0][1].values()) CHECK(v == 0.0f);

  // InstanceNorm: unit gamma, zero beta.
  for (float v : a.params[1][0].values()) CHECK(v == 1.0f);
  for (float v : a.params[1][1].values()) CHECK(v == 0.0f);
}

TEST_CASE("forward preserves geometry and lands in [0, 1]") {
  const TransferModel model = init_transfer_model<float>(transfer_architecture(4), 3);
  const Tensor x = random_image(2, 8, 12, 9);
  NoGradGuard ng;
  const Tensor y = transfer_forward(model, x);
  REQUIRE(y.shape() == Shape{2, 3, 8, 12});
  for (float v : y.values()) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("an empty layer stack is the identity") {
  TransferModel model;
  const Tensor x = random_image(1, 6, 6, 10);
  NoGradGuard ng;
  const Tensor y = transfer_forward(model, x);
  CHECK(y.values() == x.values());
}

TEST_CASE("model serialization round trips bit for bit") {
  TempDir tmp("model");
  const TransferModel model = init_transfer_model<float>(transfer_architecture(4), 99);
  save_model(model, tmp / "m.mttm");
  const TransferModel back = load_model(tmp / "m.mttm");

  REQUIRE(back.layers == model.layers);
  REQUIRE(back.params.size() == model.params.size());
  for (std::size_t l = 0; l < model.params.size(); ++l) {
    REQUIRE(back.params[l].size() == model.params[l].size());
    for (std::size_t t = 0; t < model.params[l].size(); ++t) {
      CHECK(back.params[l][t].shape() == model.params[l][t].shape());
      CHECK(back.params[l][t].values() == model.params[l][t].values());
    }
  }

  // Same bytes when saved again.
  save_model(back, tmp / "m2.mttm");
  CHECK(testutil::slurp(tmp / "m.mttm") == testutil::slurp(tmp / "m2.mttm"));
}

TEST_CASE("model loader error taxonomy") {
  TempDir tmp("model");
  const TransferModel model = init_transfer_model<float>(transfer_architecture(4), 1);
  save_model(model, tmp / "m.mttm");
  const std::string good = testutil::slurp(tmp / "m.mttm");

  CHECK_THROWS_AS(load_model(tmp / "missing.mttm"), IoError);

  SUBCASE("wrong magic") {
    std::string bad = good;
    bad[0] = 'X';
    testutil::spit(tmp / "bad.mttm", bad);
    CHECK_THROWS_AS(load_model(tmp / "bad.mttm"), UnsupportedFormatError);
  }
  SUBCASE("flipped payload byte breaks the checksum") {
    std::string bad = good;
    bad[good.size() / 2] = static_cast<char>(bad[good.size() / 2] ^ 0x5a);
    testutil::spit(tmp / "bad.mttm", bad);
    CHECK_THROWS_AS(load_model(tmp / "bad.mttm"), ChecksumError);
  }
  SUBCASE("blunt cut reads as corruption") {
    testutil::spit(tmp / "bad.mttm", good.substr(0, good.size() / 3));
    CHECK_THROWS_AS(load_model(tmp / "bad.mttm"), ChecksumError);
  }
  SUBCASE("truncation behind a valid checksum") {
    // Cut inside the blob section, then restamp the checksum so the
    // structural check is what fires.
    std::string bad = good.substr(0, good.size() - 50);
    bad.resize(bad.size() + 4);
    testutil::spit(tmp / "bad.mttm", bad);
    fixup_crc(tmp / "bad.mttm");
    CHECK_THROWS_AS(load_model(tmp / "bad.mttm"), TruncatedFileError);
  }
  SUBCASE("unknown layer kind with a valid checksum") {
    std::string bad = good;
    // Layer records start after magic(5) + descriptor length(4) + layer
    // count(4); kind is the first byte of the first record.
    bad[13] = 17;
    testutil::spit(tmp / "bad.mttm", bad);
    fixup_crc(tmp / "bad.mttm");
    CHECK_THROWS_AS(load_model(tmp / "bad.mttm"), FormatError);
  }
}

}  // TEST_SUITE
