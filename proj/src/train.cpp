#include "mtt/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "mtt/errors.hpp"
#include "mtt/image_io.hpp"
#include "mtt/rng.hpp"

namespace mtt {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::vector<nn::Tensor> texture_targets(const nn::LossNetwork& net, const RgbImage& texture,
                                        int batch_size) {
  nn::NoGradGuard ng;
  const nn::Tensor t = image_to_tensor(texture);
  const std::vector<nn::Tensor> feats = nn::loss_features(net, t);
  std::vector<nn::Tensor> targets;
  targets.reserve(net.texture_stages.size());
  for (int stage : net.texture_stages) {
    const nn::Tensor g = nn::gram(feats[static_cast<std::size_t>(stage - 1)], true);
    // (1, C, C) -> (B, C, C) so batched grams compare shape-for-shape.
    const int c = g.dim(1);
    nn::Tensor tiled = nn::Tensor::zeros({batch_size, c, c});
    const std::size_t per = static_cast<std::size_t>(c) * c;
    for (int b = 0; b < batch_size; ++b) {
      std::copy_n(g.data(), per, tiled.data() + static_cast<std::size_t>(b) * per);
    }
    targets.push_back(std::move(tiled));
  }
  return targets;
}

}  // namespace

AdamState::AdamState(const std::vector<nn::Tensor*>& params) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const auto* p : params) {
    m_.emplace_back(static_cast<std::size_t>(p->numel()), 0.0f);
    v_.emplace_back(static_cast<std::size_t>(p->numel()), 0.0f);
  }
}

void AdamState::step(const std::vector<nn::Tensor*>& params, const AdamParams& hp) {
  if (params.size() != m_.size()) throw ValidationError("adam: parameter list changed");
  ++t_;
  const double c1 = 1.0 - std::pow(hp.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(hp.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    nn::Tensor& p = *params[i];
    if (static_cast<std::size_t>(p.numel()) != m_[i].size()) {
      throw ValidationError("adam: parameter shape changed");
    }
    if (!p.has_grad()) continue;
    const auto& g = p.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    float* pv = p.data();
    for (std::size_t j = 0; j < m.size(); ++j) {
      const double gj = g[j];
      m[j] = static_cast<float>(hp.beta1 * m[j] + (1.0 - hp.beta1) * gj);
      v[j] = static_cast<float>(hp.beta2 * v[j] + (1.0 - hp.beta2) * gj * gj);
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      pv[j] -= static_cast<float>(hp.lr * mhat / (std::sqrt(vhat) + hp.eps));
    }
  }
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("train: epochs must be >= 1");
  if (batch_size < 1) throw ValidationError("train: batch size must be >= 1");
  if (iterations < 0) throw ValidationError("train: iterations must be >= 0");
  if (crop < 8 || crop % 4 != 0) throw ValidationError("train: crop must be a multiple of 4, >= 8");
  if (base_width < 1) throw ValidationError("train: base width must be >= 1");
  if (!(learning_rate > 0.0)) throw ValidationError("train: learning rate must be positive");
  if (!(weights.alpha >= 0.0 && weights.beta >= 0.0 && weights.gamma >= 0.0)) {
    throw ValidationError("train: loss weights must be non-negative");
  }
}

TrainResult train_images(const std::vector<RgbImage>& content, const RgbImage& texture,
                         const TrainConfig& cfg) {
  cfg.validate();
  if (content.empty()) throw ValidationError("train: no content images");
  for (const auto& img : content) {
    if (img.rows < cfg.crop || img.cols < cfg.crop) {
      throw ValidationError("train: content image smaller than crop");
    }
  }

  const nn::LossNetwork lossnet = nn::make_loss_network<float>(cfg.loss_net_seed);
  const std::vector<nn::Tensor> tex_targets = texture_targets(lossnet, texture, cfg.batch_size);

  nn::TransferModel model =
      nn::init_transfer_model<float>(nn::transfer_architecture(cfg.base_width), cfg.seed);
  nn::set_parameters_requires_grad(model, true);
  std::vector<nn::Tensor*> params = nn::parameters(model);
  AdamState adam(params);
  AdamParams hp;
  hp.lr = cfg.learning_rate;

  const int per_epoch =
      static_cast<int>((content.size() + cfg.batch_size - 1) / cfg.batch_size);
  const long total = cfg.iterations > 0 ? cfg.iterations
                                        : static_cast<long>(cfg.epochs) * per_epoch;

  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<std::size_t> deck(content.size());
  std::iota(deck.begin(), deck.end(), 0);
  std::size_t deck_pos = deck.size();  // forces an initial shuffle

  TrainResult result;
  result.log.reserve(static_cast<std::size_t>(total));
  nn::Tensor batch = nn::Tensor::zeros({cfg.batch_size, 3, cfg.crop, cfg.crop});

  for (long it = 1; it <= total; ++it) {
    for (int b = 0; b < cfg.batch_size; ++b) {
      if (deck_pos >= deck.size()) {
        // Fisher-Yates with our portable draws.
        for (std::size_t i = deck.size(); i > 1; --i) {
          std::swap(deck[i - 1], deck[static_cast<std::size_t>(uniform_index(rng, i))]);
        }
        deck_pos = 0;
      }
      const RgbImage& img = content[deck[deck_pos++]];
      const int r0 = static_cast<int>(
          uniform_index(rng, static_cast<std::uint64_t>(img.rows - cfg.crop + 1)));
      const int c0 = static_cast<int>(
          uniform_index(rng, static_cast<std::uint64_t>(img.cols - cfg.crop + 1)));
      float* dst = batch.data() + static_cast<std::size_t>(b) * 3 * cfg.crop * cfg.crop;
      for (int p = 0; p < 3; ++p) {
        for (int r = 0; r < cfg.crop; ++r) {
          for (int c = 0; c < cfg.crop; ++c) {
            *dst++ = static_cast<float>(img.at(p, r0 + r, c0 + c));
          }
        }
      }
    }

    nn::Tensor content_target;
    {
      nn::NoGradGuard ng;
      const auto feats = nn::loss_features(lossnet, batch);
      content_target = feats[static_cast<std::size_t>(lossnet.content_stage - 1)];
    }

    try {
      const nn::Tensor y = nn::transfer_forward(model, batch);
      const auto feats = nn::loss_features(lossnet, y);

      const nn::Tensor lc = nn::content_loss_mean(
          feats[static_cast<std::size_t>(lossnet.content_stage - 1)], content_target);
      std::vector<nn::Tensor> grams;
      grams.reserve(lossnet.texture_stages.size());
      for (int stage : lossnet.texture_stages) {
        grams.push_back(nn::gram(feats[static_cast<std::size_t>(stage - 1)], true));
      }
      const nn::Tensor lt = nn::texture_loss_mean(grams, tex_targets);
      const nn::Tensor lv = nn::tv_loss_mean(y);
      nn::Tensor lsum = nn::total_loss(lc, lt, lv, cfg.weights);

      LossRow row;
      row.iteration = static_cast<int>(it);
      row.content = static_cast<double>(lc.item());
      row.texture = static_cast<double>(lt.item());
      row.tv = static_cast<double>(lv.item());
      row.total = static_cast<double>(lsum.item());
      if (!std::isfinite(row.total)) {
        throw ValidationError("total loss is not finite");
      }
      result.log.push_back(row);

      for (auto* p : params) p->zero_grad();
      lsum.backward();
      adam.step(params, hp);
    } catch (const ValidationError& e) {
      throw ValidationError("train iteration " + std::to_string(it) + ": " + e.what());
    }

    const bool epoch_end = (it % per_epoch == 0) || it == total;
    if (epoch_end && !cfg.checkpoint_dir.empty()) {
      const long epoch = (it + per_epoch - 1) / per_epoch;
      char name[64];
      std::snprintf(name, sizeof(name), "checkpoint_%04ld.mttm", epoch);
      const auto base = cfg.checkpoint_dir / name;
      nn::save_model(model, base);
      nlohmann::json j{{"epoch", epoch},
                       {"iteration", it},
                       {"total_loss", result.log.back().total},
                       {"seed", cfg.seed}};
      std::ofstream side(base.string() + ".json", std::ios::trunc);
      if (!side) throw IoError("cannot write checkpoint sidecar: " + base.string() + ".json");
      side << j.dump(2) << '\n';
    }
  }

  result.model = std::move(model);
  return result;
}

TrainResult train(const TrainConfig& cfg) {
  cfg.validate();
  const Colormap map = resolve_colormap(cfg.colormap);

  std::vector<std::filesystem::path> files;
  if (!std::filesystem::is_directory(cfg.content_dir)) {
    throw IoError("content directory not found: " + cfg.content_dir.string());
  }
  for (const auto& entry : std::filesystem::directory_iterator(cfg.content_dir)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = entry.path().extension().string();
    if (ext == ".wav" || ext == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) {
    throw ValidationError("train: no .wav or .png content in " + cfg.content_dir.string());
  }

  const auto to_image = [&](const std::filesystem::path& p) -> RgbImage {
    if (p.extension() == ".png") return read_png_rgb8(p);
    AudioClip clip = read_wav(p);
    clip = resample(clip, cfg.pipeline.sample_rate);
    return audio2img(clip, cfg.pipeline, map).rgb;
  };

  std::vector<RgbImage> content;
  content.reserve(files.size());
  for (const auto& p : files) content.push_back(to_image(p));

  if (cfg.texture_path.empty()) throw ValidationError("train: texture path required");
  const RgbImage texture = to_image(cfg.texture_path);

  TrainResult result = train_images(content, texture, cfg);
  if (!cfg.loss_log.empty()) write_loss_csv(result.log, cfg.loss_log);
  return result;
}

void write_loss_csv(const std::vector<LossRow>& log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open loss log for writing: " + path.string());
  out << "iteration,content,texture,tv,total\n";
  char line[160];
  for (const auto& row : log) {
    std::snprintf(line, sizeof(line), "%d,%.9g,%.9g,%.9g,%.9g\n", row.iteration, row.content,
                  row.texture, row.tv, row.total);
    out << line;
  }
  if (!out) throw IoError("write failure: " + path.string());
}

AudioClip synthetic_content_clip(std::uint64_t seed, double duration, int sample_rate) {
  if (!(duration > 0.0)) throw ValidationError("synthetic clip: duration must be positive");
  if (sample_rate <= 0) throw ValidationError("synthetic clip: sample rate must be positive");

  std::mt19937_64 g(seed);
  const int tones = 3 + static_cast<int>(uniform_index(g, 3));
  struct Tone {
    double freq, amp, phase, am_rate, am_depth;
  };
  std::vector<Tone> mix;
  mix.reserve(static_cast<std::size_t>(tones));
  for (int i = 0; i < tones; ++i) {
    Tone t;
    t.freq = 80.0 * std::exp(uniform_unit(g) * std::log(4000.0 / 80.0));
    t.amp = uniform_range(g, 0.3, 1.0);
    t.phase = uniform_range(g, 0.0, 2.0 * kPi);
    t.am_rate = uniform_range(g, 0.25, 3.0);
    t.am_depth = uniform_range(g, 0.0, 0.5);
    mix.push_back(t);
  }

  const long n = std::llround(duration * sample_rate);
  AudioClip clip;
  clip.sample_rate = sample_rate;
  clip.samples.resize(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    double s = 0.0;
    for (const auto& tone : mix) {
      const double am = 1.0 - tone.am_depth * 0.5 * (1.0 + std::sin(2.0 * kPi * tone.am_rate * t));
      s += tone.amp * am * std::sin(2.0 * kPi * tone.freq * t + tone.phase);
    }
    clip.samples[static_cast<std::size_t>(i)] = s;
  }
  return peak_normalize(clip, 0.9);
}

}  // namespace mtt
