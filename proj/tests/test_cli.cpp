#include <doctest.h>

#include <string>

#include "mtt/audio.hpp"
#include "mtt/image_io.hpp"
#include "mtt/network.hpp"
#include "helpers.hpp"

using namespace mtt;
using testutil::run_cli;
using testutil::TempDir;

namespace {

std::string q(const std::filesystem::path& p) { return "\"" + p.string() + "\""; }

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("convert/reconstruct round trip through the binary") {
  REQUIRE_MESSAGE(std::getenv("MTT_BIN") != nullptr, "MTT_BIN must point at the CLI binary");
  TempDir tmp("cli");

  const AudioClip clip = pink_noise(1.0, 22050, 21);
  write_wav(clip, tmp / "in.wav");

  auto conv = run_cli("convert " + q(tmp / "in.wav") + " " + q(tmp / "out.png"));
  CAPTURE(conv.out);
  REQUIRE(conv.exit_code == 0);
  CHECK(conv.out.find("image 1025x87") != std::string::npos);
  CHECK(std::filesystem::exists(tmp / "out.png"));
  CHECK(std::filesystem::exists(tmp / "out.json"));  // default sidecar path

  const SpectralMeta meta = read_meta(tmp / "out.json");
  CHECK(meta.num_samples == 22050);
  CHECK(meta.colormap == "gray");
  CHECK(meta.lambda == 0.618);

  auto rec = run_cli("reconstruct " + q(tmp / "out.png") + " " + q(tmp / "back.wav") +
                     " --gla-iters 4 --seed 5");
  CAPTURE(rec.out);
  REQUIRE(rec.exit_code == 0);
  CHECK(rec.out.find("gla_convergence ") != std::string::npos);

  const AudioClip back = read_wav(tmp / "back.wav");
  CHECK(back.sample_rate == 22050);
  CHECK(back.num_samples() == clip.num_samples());
  CHECK(peak(back) == doctest::Approx(peak(clip)).epsilon(1e-3));
}

TEST_CASE("convert records pipeline overrides in the sidecar") {
  TempDir tmp("cli");
  write_wav(pink_noise(0.5, 22050, 3), tmp / "in.wav");
  auto conv = run_cli("convert " + q(tmp / "in.wav") + " " + q(tmp / "out.png") +
                      " --lambda 1.0 --colormap fire --n-fft 1024 --hop 128");
  CAPTURE(conv.out);
  REQUIRE(conv.exit_code == 0);
  const SpectralMeta meta = read_meta(tmp / "out.json");
  CHECK(meta.lambda == 1.0);
  CHECK(meta.colormap == "fire");
  CHECK(meta.n_fft == 1024);
  CHECK(meta.hop == 128);
  CHECK(read_png_rgb8(tmp / "out.png").rows == 513);
}

TEST_CASE("transfer runs a model end to end and reports runtime") {
  TempDir tmp("cli");
  write_wav(pink_noise(0.6, 22050, 4), tmp / "in.wav");
  nn::save_model(nn::init_transfer_model<float>(nn::transfer_architecture(4), 2),
                 tmp / "m.mttm");
  auto tr = run_cli("transfer " + q(tmp / "in.wav") + " " + q(tmp / "out.wav") + " --model " +
                    q(tmp / "m.mttm") + " --gla-iters 3");
  CAPTURE(tr.out);
  REQUIRE(tr.exit_code == 0);
  CHECK(tr.out.find("runtime_s ") != std::string::npos);
  CHECK(tr.out.find("peak_memory_mb ") != std::string::npos);
  CHECK(read_wav(tmp / "out.wav").num_samples() == 22050 * 6 / 10);
}

TEST_CASE("bench writes the annotated csv report") {
  TempDir tmp("cli");
  std::filesystem::create_directories(tmp / "clips");
  write_wav(pink_noise(0.4, 22050, 5), tmp / "clips" / "a.wav");
  nn::save_model(nn::init_transfer_model<float>(nn::transfer_architecture(4), 2),
                 tmp / "m.mttm");
  auto be = run_cli("bench --input " + q(tmp / "clips") + " --model " + q(tmp / "m.mttm") +
                    " -o " + q(tmp / "report.csv") + " --gla-iters 2");
  CAPTURE(be.out);
  REQUIRE(be.exit_code == 0);
  const std::string csv = testutil::slurp(tmp / "report.csv");
  CHECK(csv.find("# reference single-core baseline: 30.84 s") != std::string::npos);
  CHECK(csv.find("213 MB") != std::string::npos);
  CHECK(csv.find("file,seconds,peak_mb\n") != std::string::npos);
  CHECK(csv.find("a.wav,") != std::string::npos);
  CHECK(csv.find("mean,") != std::string::npos);
}

TEST_CASE("exit codes separate io, validation and usage failures") {
  TempDir tmp("cli");
  CHECK(run_cli("convert " + q(tmp / "missing.wav") + " " + q(tmp / "x.png")).exit_code == 2);

  testutil::spit(tmp / "junk.wav", "not a wav at all");
  CHECK(run_cli("convert " + q(tmp / "junk.wav") + " " + q(tmp / "x.png")).exit_code == 2);

  write_wav(pink_noise(0.3, 22050, 6), tmp / "ok.wav");
  CHECK(run_cli("synth " + q(tmp / "out.wav") + " --texture " + q(tmp / "ok.wav")).exit_code ==
        3);  // neither --model nor --train-inline
  CHECK(run_cli("convert " + q(tmp / "ok.wav") + " " + q(tmp / "x.png") + " --bogus").exit_code ==
        3);
  CHECK(run_cli("train --content " + q(tmp.path()) + " --texture " + q(tmp / "ok.wav") + " -o " +
                q(tmp / "m.mttm") + " --crop 10")
            .exit_code == 3);

  // Sidecar with a broken field -> validation failure surfaced as exit 3.
  write_wav(pink_noise(0.3, 22050, 7), tmp / "in.wav");
  REQUIRE(run_cli("convert " + q(tmp / "in.wav") + " " + q(tmp / "img.png")).exit_code == 0);
  std::string meta = testutil::slurp(tmp / "img.json");
  const auto pos = meta.find("\"input_peak\"");
  REQUIRE(pos != std::string::npos);
  meta.replace(pos, std::string("\"input_peak\"").size(), "\"wrong_key\"");
  testutil::spit(tmp / "img.json", meta);
  CHECK(run_cli("reconstruct " + q(tmp / "img.png") + " " + q(tmp / "out.wav")).exit_code == 2);
}

}  // TEST_SUITE
