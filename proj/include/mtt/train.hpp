#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mtt/loss.hpp"
#include "mtt/network.hpp"
#include "mtt/pipeline.hpp"

namespace mtt {

struct AdamParams {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment buffers for a fixed parameter list, with bias-corrected
// updates. step() consumes the gradients currently in the parameters.
class AdamState {
 public:
  explicit AdamState(const std::vector<nn::Tensor*>& params);
  void step(const std::vector<nn::Tensor*>& params, const AdamParams& hp);
  long step_count() const { return t_; }

 private:
  std::vector<std::vector<float>> m_, v_;
  long t_ = 0;
};

struct TrainConfig {
  std::filesystem::path content_dir;
  std::filesystem::path texture_path;
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints
  std::filesystem::path loss_log;        // empty: no CSV

  int epochs = 10;
  int batch_size = 16;
  // > 0 caps the total iteration count (the desk-scale preset uses 200);
  // 0 lets epochs * ceil(#content / batch) drive.
  int iterations = 0;
  int crop = 64;          // square crop side, multiple of 4
  int base_width = 32;
  double learning_rate = 1e-3;
  nn::LossWeights weights;
  std::uint64_t seed = 0;
  std::uint64_t loss_net_seed = nn::kLossNetworkSeed;

  PipelineConfig pipeline;
  std::string colormap = "gray";

  void validate() const;
};

struct LossRow {
  int iteration = 0;  // 1-based
  double content = 0.0, texture = 0.0, tv = 0.0, total = 0.0;
};

struct TrainResult {
  nn::TransferModel model;
  std::vector<LossRow> log;
};

// Core loop over pre-converted spectrogram images: random crops of the content
// images feed the net, Gram targets come from the full texture image through
// the frozen loss network. Deterministic in cfg.seed (single-threaded, fixed
// draw order). Non-finite losses abort with the iteration in the message.
TrainResult train_images(const std::vector<RgbImage>& content, const RgbImage& texture,
                         const TrainConfig& cfg);

// Filesystem front end: loads .wav (converted via cfg.pipeline, resampled on
// ingest) and .png content files from cfg.content_dir, converts the texture,
// then runs train_images. Writes checkpoints/CSV if configured.
TrainResult train(const TrainConfig& cfg);

void write_loss_csv(const std::vector<LossRow>& log, const std::filesystem::path& path);

// Deterministic sine-mixture content (3..5 tones, slow amplitude wobble),
// peak 0.9. Stands in for real music in self-contained runs and tests.
AudioClip synthetic_content_clip(std::uint64_t seed, double duration, int sample_rate);

}  // namespace mtt
