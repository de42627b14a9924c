#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mtt/errors.hpp"
#include "mtt/image_io.hpp"
#include "mtt/pipeline.hpp"
#include "mtt/train.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Process high-water resident memory in MB (VmHWM). Cumulative over the
// process lifetime, so per-task numbers are approximate upper bounds.
long peak_rss_mb() {
  std::ifstream status("/proc/self/status");
  std::string key;
  while (status >> key) {
    if (key == "VmHWM:") {
      long kb = 0;
      status >> kb;
      return kb / 1024;
    }
    status.ignore(std::numeric_limits<std::streamsize>::max(), '\n');
  }
  return -1;
}

struct PipelineFlags {
  int sample_rate = 22050;
  int n_fft = 2048;
  int hop = 256;
  double window_sigma = 256.0;
  double lambda = 0.618;
  std::string colormap = "gray";
};

void add_pipeline_flags(CLI::App* cmd, PipelineFlags& f) {
  cmd->add_option("--sample-rate", f.sample_rate, "Working sample rate; input is resampled to it")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--n-fft", f.n_fft, "FFT size (power of two)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--hop", f.hop, "Analysis hop in samples")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--window-sigma", f.window_sigma, "Gaussian window std-dev in samples")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--lambda", f.lambda, "Denoise threshold factor")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  cmd->add_option("--colormap", f.colormap, "gray, fire, or path to a colormap file")
      ->capture_default_str();
}

mtt::PipelineConfig to_config(const PipelineFlags& f) {
  mtt::PipelineConfig cfg;
  cfg.sample_rate = f.sample_rate;
  cfg.stft = mtt::StftParams{f.n_fft, f.hop, f.window_sigma};
  cfg.lambda = f.lambda;
  cfg.stft.validate();
  return cfg;
}

std::filesystem::path default_meta_path(const std::filesystem::path& image_path) {
  std::filesystem::path p = image_path;
  p.replace_extension(".json");
  return p;
}

mtt::AudioClip load_audio_at(const std::filesystem::path& path, int rate) {
  mtt::AudioClip clip = mtt::read_wav(path);
  return mtt::resample(clip, rate);
}

void add_deterministic_flag(CLI::App* cmd, bool& flag) {
  cmd->add_flag("--deterministic", flag,
                "Accepted for compatibility; runs are single-threaded and "
                "deterministic by construction");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"audio texture transfer over spectrogram images"};
  app.require_subcommand(1);

  // ---- convert ----
  auto* convert = app.add_subcommand("convert", "Audio file to spectrogram PNG + JSON sidecar");
  static std::string cv_in, cv_out, cv_meta;
  static PipelineFlags cv_flags;
  convert->add_option("input", cv_in, "Input .wav")->required();
  convert->add_option("output", cv_out, "Output .png")->required();
  convert->add_option("--meta", cv_meta, "Sidecar path (default: output with .json)");
  add_pipeline_flags(convert, cv_flags);
  convert->callback([] {
    const mtt::PipelineConfig cfg = to_config(cv_flags);
    const mtt::Colormap map = mtt::resolve_colormap(cv_flags.colormap);
    const mtt::AudioClip clip = load_audio_at(cv_in, cfg.sample_rate);
    const mtt::ConvertResult result = mtt::audio2img(clip, cfg, map);
    mtt::write_png_rgb8(result.rgb, cv_out);
    const auto meta_path = cv_meta.empty() ? default_meta_path(cv_out) : std::filesystem::path(cv_meta);
    mtt::write_meta(result.meta, meta_path);
    std::printf("image %dx%d\n", result.rgb.rows, result.rgb.cols);
  });

  // ---- reconstruct ----
  auto* rec = app.add_subcommand("reconstruct", "Spectrogram PNG + sidecar back to audio");
  static std::string rc_in, rc_out, rc_meta, rc_colormap;
  static int rc_iters = 100;
  static std::uint64_t rc_seed = 0;
  static bool rc_det = false;
  rec->add_option("input", rc_in, "Input .png")->required();
  rec->add_option("output", rc_out, "Output .wav")->required();
  rec->add_option("--meta", rc_meta, "Sidecar path (default: input with .json)");
  rec->add_option("--gla-iters", rc_iters, "Phase reconstruction iterations")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  rec->add_option("--seed", rc_seed, "Initial phase seed")->capture_default_str();
  rec->add_option("--colormap", rc_colormap, "Override colormap (default: sidecar record)");
  add_deterministic_flag(rec, rc_det);
  rec->callback([] {
    const auto meta_path = rc_meta.empty() ? default_meta_path(rc_in) : std::filesystem::path(rc_meta);
    const mtt::SpectralMeta meta = mtt::read_meta(meta_path);
    const std::string cm = !rc_colormap.empty() ? rc_colormap
                           : !meta.colormap.empty() ? meta.colormap
                                                    : std::string("gray");
    const mtt::Colormap map = mtt::resolve_colormap(cm);
    const mtt::RgbImage img = mtt::read_png_rgb8(rc_in);
    // Inline img2audio so the convergence trace stays visible.
    if (img.rows != meta.n_fft / 2 + 1) {
      throw mtt::ValidationError("reconstruct: image rows do not match sidecar n_fft");
    }
    if (img.cols != 1 + static_cast<int>(meta.num_samples / meta.hop)) {
      throw mtt::ValidationError("reconstruct: image width does not match sidecar num_samples");
    }
    const mtt::NormalizedImage field = mtt::rgb2sc(img, map);
    const mtt::DbSpectrogram db = mtt::denormalize(field, meta);
    const mtt::MagnitudeSpectrogram mag = mtt::from_db(db);
    mtt::GlaResult gla = mtt::griffin_lim(mag, {rc_iters, rc_seed});
    mtt::AudioClip out = std::move(gla.clip);
    out.sample_rate = meta.sample_rate;
    out.samples.resize(static_cast<std::size_t>(meta.num_samples), 0.0);
    out = mtt::peak_normalize(out, meta.input_peak);
    mtt::write_wav(out, rc_out);
    std::printf("gla_convergence %.9g\n", gla.convergence.back());
  });

  // ---- transfer ----
  auto* tr = app.add_subcommand("transfer", "Stylize audio with a trained model");
  static std::string tf_in, tf_out, tf_model;
  static PipelineFlags tf_flags;
  static int tf_iters = 100;
  static std::uint64_t tf_seed = 0;
  static bool tf_det = false;
  tr->add_option("input", tf_in, "Input .wav")->required();
  tr->add_option("output", tf_out, "Output .wav")->required();
  tr->add_option("--model", tf_model, "Trained model file")->required();
  tr->add_option("--gla-iters", tf_iters, "Phase reconstruction iterations")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  tr->add_option("--seed", tf_seed, "Initial phase seed")->capture_default_str();
  add_pipeline_flags(tr, tf_flags);
  add_deterministic_flag(tr, tf_det);
  tr->callback([] {
    const auto t0 = Clock::now();
    const mtt::PipelineConfig cfg = to_config(tf_flags);
    const mtt::Colormap map = mtt::resolve_colormap(tf_flags.colormap);
    const mtt::nn::TransferModel model = mtt::nn::load_model(tf_model);
    const mtt::AudioClip clip = load_audio_at(tf_in, cfg.sample_rate);
    const mtt::ConvertResult converted = mtt::audio2img(clip, cfg, map);
    const mtt::RgbImage styled = mtt::run_transfer(model, converted.rgb);
    const mtt::AudioClip out = mtt::img2audio(styled, converted.meta, map, {tf_iters, tf_seed});
    mtt::write_wav(out, tf_out);
    std::printf("runtime_s %.2f\n", seconds_since(t0));
    std::printf("peak_memory_mb %ld\n", peak_rss_mb());
  });

  // ---- train ----
  auto* tn = app.add_subcommand("train", "Train a transfer model on spectrogram crops");
  static mtt::TrainConfig tn_cfg;
  static PipelineFlags tn_flags;
  static std::string tn_content, tn_texture, tn_output, tn_ckpt, tn_log;
  static bool tn_desk = false, tn_det = false;
  tn->add_option("--content", tn_content, "Directory of content .wav/.png files")->required();
  tn->add_option("--texture", tn_texture, "Texture .wav/.png")->required();
  tn->add_option("-o,--output", tn_output, "Output model file")->required();
  auto* opt_epochs = tn->add_option("--epochs", tn_cfg.epochs, "Training epochs")
                         ->check(CLI::PositiveNumber)
                         ->capture_default_str();
  auto* opt_batch = tn->add_option("--batch", tn_cfg.batch_size, "Batch size")
                        ->check(CLI::PositiveNumber)
                        ->capture_default_str();
  auto* opt_iters =
      tn->add_option("--iterations", tn_cfg.iterations, "Cap total iterations (0: epochs drive)")
          ->check(CLI::NonNegativeNumber)
          ->capture_default_str();
  tn->add_option("--crop", tn_cfg.crop, "Square crop side (multiple of 4)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  tn->add_option("--lr", tn_cfg.learning_rate, "Adam learning rate")->capture_default_str();
  tn->add_option("--alpha", tn_cfg.weights.alpha, "Content weight")->capture_default_str();
  tn->add_option("--beta", tn_cfg.weights.beta, "Texture weight")->capture_default_str();
  tn->add_option("--gamma", tn_cfg.weights.gamma, "Smoothness weight")->capture_default_str();
  tn->add_option("--width", tn_cfg.base_width, "Base channel width")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  tn->add_option("--seed", tn_cfg.seed, "Init/shuffle/crop seed")->capture_default_str();
  tn->add_option("--checkpoint-dir", tn_ckpt, "Write per-epoch checkpoints here");
  tn->add_option("--loss-log", tn_log, "Write per-iteration loss CSV here");
  tn->add_flag("--desk", tn_desk, "Desk-scale preset: batch 4, 200 iterations");
  add_pipeline_flags(tn, tn_flags);
  add_deterministic_flag(tn, tn_det);
  tn->callback([=] {
    if (tn_desk) {
      if (opt_batch->count() == 0) tn_cfg.batch_size = 4;
      if (opt_iters->count() == 0) tn_cfg.iterations = 200;
      (void)opt_epochs;
    }
    tn_cfg.content_dir = tn_content;
    tn_cfg.texture_path = tn_texture;
    tn_cfg.checkpoint_dir = tn_ckpt;
    tn_cfg.loss_log = tn_log;
    tn_cfg.pipeline = to_config(tn_flags);
    tn_cfg.colormap = tn_flags.colormap;
    if (!tn_cfg.checkpoint_dir.empty()) {
      std::filesystem::create_directories(tn_cfg.checkpoint_dir);
    }
    const mtt::TrainResult result = mtt::train(tn_cfg);
    mtt::nn::save_model(result.model, tn_output);
    std::printf("iterations %zu\n", result.log.size());
    if (!result.log.empty()) {
      std::printf("first_loss %.9g\n", result.log.front().total);
      std::printf("final_loss %.9g\n", result.log.back().total);
    }
  });

  // ---- synth ----
  auto* sy = app.add_subcommand("synth", "Synthesize texture audio from noise");
  static std::string sy_out, sy_texture, sy_model, sy_save_model;
  static PipelineFlags sy_flags;
  static double sy_duration = 10.0;
  static int sy_iters = 100, sy_train_iters = 200, sy_width = 32;
  static std::uint64_t sy_seed = 0;
  static double sy_beta = 500.0, sy_gamma = 200.0;
  static bool sy_inline = false, sy_det = false;
  sy->add_option("output", sy_out, "Output .wav")->required();
  sy->add_option("--texture", sy_texture, "Texture .wav/.png")->required();
  sy->add_option("--duration", sy_duration, "Seconds of audio to synthesize")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sy->add_option("--model", sy_model, "Pretrained synthesis model");
  sy->add_flag("--train-inline", sy_inline, "Train a content-free model now (alpha = 0)");
  sy->add_option("--train-iterations", sy_train_iters, "Inline training iterations")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sy->add_option("--save-model", sy_save_model, "Persist the inline-trained model");
  sy->add_option("--width", sy_width, "Base channel width (inline training)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sy->add_option("--beta", sy_beta, "Texture weight (inline training)")->capture_default_str();
  sy->add_option("--gamma", sy_gamma, "Smoothness weight (inline training)")
      ->capture_default_str();
  sy->add_option("--gla-iters", sy_iters, "Phase reconstruction iterations")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sy->add_option("--seed", sy_seed, "Noise/training seed")->capture_default_str();
  add_pipeline_flags(sy, sy_flags);
  add_deterministic_flag(sy, sy_det);
  sy->callback([] {
    const mtt::PipelineConfig cfg = to_config(sy_flags);
    const mtt::Colormap map = mtt::resolve_colormap(sy_flags.colormap);
    if (sy_model.empty() && !sy_inline) {
      throw mtt::ValidationError("synth: provide --model or --train-inline");
    }

    const auto texture_image = [&]() -> mtt::RgbImage {
      const std::filesystem::path p = sy_texture;
      if (p.extension() == ".png") return mtt::read_png_rgb8(p);
      return mtt::audio2img(load_audio_at(p, cfg.sample_rate), cfg, map).rgb;
    }();

    mtt::nn::TransferModel model;
    if (!sy_model.empty()) {
      model = mtt::nn::load_model(sy_model);
    } else {
      mtt::TrainConfig tc;
      tc.batch_size = 4;
      tc.iterations = sy_train_iters;
      tc.crop = 64;
      tc.base_width = sy_width;
      tc.weights.alpha = 0.0;  // texture only: no content anchor when dreaming from noise
      tc.weights.beta = sy_beta;
      tc.weights.gamma = sy_gamma;
      tc.seed = sy_seed;
      tc.pipeline = cfg;
      std::vector<mtt::RgbImage> content;
      for (int k = 0; k < 4; ++k) {
        const mtt::AudioClip noise =
            mtt::pink_noise(sy_duration, cfg.sample_rate, sy_seed * 1000 + 1 + k);
        content.push_back(mtt::audio2img(noise, cfg, map).rgb);
      }
      model = mtt::train_images(content, texture_image, tc).model;
      if (!sy_save_model.empty()) mtt::nn::save_model(model, sy_save_model);
    }

    const mtt::AudioClip noise = mtt::pink_noise(sy_duration, cfg.sample_rate, sy_seed);
    const mtt::ConvertResult input = mtt::audio2img(noise, cfg, map);
    const mtt::RgbImage styled = mtt::run_transfer(model, input.rgb);
    const mtt::AudioClip out = mtt::img2audio(styled, input.meta, map, {sy_iters, sy_seed});
    mtt::write_wav(out, sy_out);

    // End-to-end texture diagnostics, measured on the audio that was written.
    const mtt::ConvertResult roundtrip = mtt::audio2img(out, cfg, map);
    mtt::nn::NoGradGuard ng;
    const mtt::nn::LossNetwork lossnet = mtt::nn::make_loss_network<float>();
    const auto tex_feats = mtt::nn::loss_features(lossnet, mtt::image_to_tensor(texture_image));
    const auto in_feats = mtt::nn::loss_features(lossnet, mtt::image_to_tensor(input.rgb));
    const auto out_feats = mtt::nn::loss_features(lossnet, mtt::image_to_tensor(roundtrip.rgb));
    std::vector<mtt::nn::Tensor> targets, gin, gout;
    for (int stage : lossnet.texture_stages) {
      targets.push_back(mtt::nn::gram(tex_feats[static_cast<std::size_t>(stage - 1)], true));
      gin.push_back(mtt::nn::gram(in_feats[static_cast<std::size_t>(stage - 1)], true));
      gout.push_back(mtt::nn::gram(out_feats[static_cast<std::size_t>(stage - 1)], true));
    }
    const double lt_in = mtt::nn::texture_loss_mean(gin, targets).item();
    const double lt_out = mtt::nn::texture_loss_mean(gout, targets).item();
    const double residual =
        mtt::nn::content_loss_mean(
            out_feats[static_cast<std::size_t>(lossnet.content_stage - 1)],
            in_feats[static_cast<std::size_t>(lossnet.content_stage - 1)])
            .item();
    std::printf("texture_loss_input %.9g\n", lt_in);
    std::printf("texture_loss_output %.9g\n", lt_out);
    std::printf("texture_ratio %.6f\n", lt_in > 0.0 ? lt_out / lt_in : 0.0);
    std::printf("content_residual %.9g\n", residual);
  });

  // ---- bench ----
  auto* be = app.add_subcommand("bench", "Time the full transfer task over a directory");
  static std::string be_dir, be_model, be_csv, be_outdir;
  static PipelineFlags be_flags;
  static int be_iters = 100;
  static bool be_det = false;
  be->add_option("--input", be_dir, "Directory of .wav clips")->required();
  be->add_option("--model", be_model, "Trained model file")->required();
  be->add_option("-o,--output", be_csv, "CSV report path (default: stdout)");
  be->add_option("--output-dir", be_outdir, "Also write the stylized clips here");
  be->add_option("--gla-iters", be_iters, "Phase reconstruction iterations")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  add_pipeline_flags(be, be_flags);
  add_deterministic_flag(be, be_det);
  be->callback([] {
    const mtt::PipelineConfig cfg = to_config(be_flags);
    const mtt::Colormap map = mtt::resolve_colormap(be_flags.colormap);
    if (!std::filesystem::is_directory(be_dir)) {
      throw mtt::IoError("bench: input directory not found: " + be_dir);
    }
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(be_dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".wav") {
        files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw mtt::ValidationError("bench: no .wav files in " + be_dir);
    const mtt::nn::TransferModel model = mtt::nn::load_model(be_model);
    if (!be_outdir.empty()) std::filesystem::create_directories(be_outdir);

    std::string csv;
    csv += "# reference single-core baseline: 30.84 s per 10 s clip, 213 MB peak memory\n";
    csv += "file,seconds,peak_mb\n";
    double total_s = 0.0;
    for (const auto& f : files) {
      const auto t0 = Clock::now();
      const mtt::AudioClip clip = load_audio_at(f, cfg.sample_rate);
      const mtt::ConvertResult converted = mtt::audio2img(clip, cfg, map);
      const mtt::RgbImage styled = mtt::run_transfer(model, converted.rgb);
      const mtt::AudioClip out = mtt::img2audio(styled, converted.meta, map, {be_iters, 0});
      if (!be_outdir.empty()) {
        mtt::write_wav(out, std::filesystem::path(be_outdir) / f.filename());
      }
      const double dt = seconds_since(t0);
      total_s += dt;
      char line[512];
      std::snprintf(line, sizeof(line), "%s,%.2f,%ld\n", f.filename().string().c_str(), dt,
                    peak_rss_mb());
      csv += line;
    }
    char line[128];
    std::snprintf(line, sizeof(line), "mean,%.2f,%ld\n",
                  total_s / static_cast<double>(files.size()), peak_rss_mb());
    csv += line;

    if (be_csv.empty()) {
      std::fputs(csv.c_str(), stdout);
    } else {
      std::ofstream out(be_csv, std::ios::trunc);
      if (!out) throw mtt::IoError("cannot open report for writing: " + be_csv);
      out << csv;
    }
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 3;
  } catch (const mtt::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const mtt::IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const mtt::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected error: %s\n", e.what());
    return 1;
  }
  return 0;
}
