#include "mtt/pipeline.hpp"

#include <algorithm>

#include "mtt/errors.hpp"

namespace mtt {

ConvertResult audio2img(const AudioClip& clip, const PipelineConfig& cfg, const Colormap& map) {
  if (clip.sample_rate != cfg.sample_rate) {
    throw ValidationError("audio2img: clip rate " + std::to_string(clip.sample_rate) +
                          " does not match configured rate " + std::to_string(cfg.sample_rate) +
                          " (resample on ingest)");
  }
  const double input_peak = peak(clip);

  const ComplexSpectrogram spec = stft(clip, cfg.stft);
  const MagnitudeSpectrogram mag = magnitude(spec);
  const DbSpectrogram db = to_db(mag);
  const DbSpectrogram masked = denoise_mask(db, cfg.lambda);

  ConvertResult result;
  auto [field, meta] = normalize01(masked);
  meta.lambda = cfg.lambda;
  meta.num_samples = clip.num_samples();
  meta.input_peak = input_peak;
  meta.colormap = map.name;
  result.field = std::move(field);
  result.meta = meta;
  result.rgb = apply_colormap(result.field, map);
  return result;
}

nn::Tensor image_to_tensor(const RgbImage& img) {
  if (img.rows <= 0 || img.cols <= 0) throw ValidationError("image_to_tensor: empty image");
  nn::Tensor t = nn::Tensor::zeros({1, 3, img.rows, img.cols});
  for (std::size_t i = 0; i < img.v.size(); ++i) t.data()[i] = static_cast<float>(img.v[i]);
  return t;
}

nn::Tensor images_to_batch(const std::vector<RgbImage>& imgs) {
  if (imgs.empty()) throw ValidationError("images_to_batch: empty batch");
  const int rows = imgs[0].rows, cols = imgs[0].cols;
  nn::Tensor t = nn::Tensor::zeros({static_cast<int>(imgs.size()), 3, rows, cols});
  const std::size_t per = imgs[0].v.size();
  for (std::size_t n = 0; n < imgs.size(); ++n) {
    if (imgs[n].rows != rows || imgs[n].cols != cols) {
      throw ValidationError("images_to_batch: mixed image sizes");
    }
    for (std::size_t i = 0; i < per; ++i) {
      t.data()[n * per + i] = static_cast<float>(imgs[n].v[i]);
    }
  }
  return t;
}

RgbImage tensor_to_image(const nn::Tensor& t, int batch_index) {
  if (!t.defined() || t.rank() != 4 || t.dim(1) != 3) {
    throw ValidationError("tensor_to_image: tensor must be (N, 3, H, W)");
  }
  if (batch_index < 0 || batch_index >= t.dim(0)) {
    throw ValidationError("tensor_to_image: batch index out of range");
  }
  RgbImage img(t.dim(2), t.dim(3));
  const std::size_t per = img.v.size();
  const float* src = t.data() + static_cast<std::size_t>(batch_index) * per;
  for (std::size_t i = 0; i < per; ++i) {
    img.v[i] = std::clamp(static_cast<double>(src[i]), 0.0, 1.0);
  }
  return img;
}

RgbImage reflect_pad(const RgbImage& img, int target_rows, int target_cols) {
  if (target_rows < img.rows || target_cols < img.cols) {
    throw ValidationError("reflect_pad: target smaller than image");
  }
  if (target_rows - img.rows > img.rows - 1 || target_cols - img.cols > img.cols - 1) {
    throw ValidationError("reflect_pad: pad exceeds mirror range");
  }
  RgbImage out(target_rows, target_cols);
  for (int p = 0; p < 3; ++p) {
    for (int r = 0; r < target_rows; ++r) {
      const int sr = r < img.rows ? r : 2 * (img.rows - 1) - r;
      for (int c = 0; c < target_cols; ++c) {
        const int sc = c < img.cols ? c : 2 * (img.cols - 1) - c;
        out.at(p, r, c) = img.at(p, sr, sc);
      }
    }
  }
  return out;
}

RgbImage crop_at(const RgbImage& img, int row0, int col0, int rows, int cols) {
  if (rows <= 0 || cols <= 0 || row0 < 0 || col0 < 0 || row0 + rows > img.rows ||
      col0 + cols > img.cols) {
    throw ValidationError("crop: window out of range");
  }
  RgbImage out(rows, cols);
  for (int p = 0; p < 3; ++p) {
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) out.at(p, r, c) = img.at(p, row0 + r, col0 + c);
    }
  }
  return out;
}

RgbImage crop(const RgbImage& img, int rows, int cols) { return crop_at(img, 0, 0, rows, cols); }

int pad_to_multiple(int n, int multiple) {
  if (n <= 0 || multiple <= 0) throw ValidationError("pad_to_multiple: positive args required");
  const int rem = n % multiple;
  return rem == 0 ? n : n + (multiple - rem);
}

RgbImage run_transfer(const nn::TransferModel& model, const RgbImage& img) {
  // Two stride-2 stages means geometry survives exactly when H, W are
  // multiples of 4.
  const int rows = pad_to_multiple(img.rows, 4);
  const int cols = pad_to_multiple(img.cols, 4);
  const RgbImage padded = (rows == img.rows && cols == img.cols)
                              ? img
                              : reflect_pad(img, rows, cols);
  nn::NoGradGuard ng;
  const nn::Tensor out = nn::transfer_forward(model, image_to_tensor(padded));
  if (out.dim(2) != rows || out.dim(3) != cols) {
    throw ValidationError("transfer: network changed the image geometry");
  }
  RgbImage result = tensor_to_image(out);
  if (rows != img.rows || cols != img.cols) result = crop(result, img.rows, img.cols);
  return result;
}

}  // namespace mtt
