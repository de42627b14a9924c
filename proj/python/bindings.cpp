#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>
#include <utility>
#include <vector>

#include "mtt/errors.hpp"
#include "mtt/image_io.hpp"
#include "mtt/pipeline.hpp"
#include "mtt/train.hpp"

namespace py = pybind11;

namespace {

mtt::AudioClip to_clip(const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
                       int rate) {
  if (a.ndim() != 1) throw mtt::ValidationError("samples must be a 1-D array");
  mtt::AudioClip clip;
  clip.sample_rate = rate;
  clip.samples.assign(a.data(), a.data() + a.shape(0));
  return clip;
}

py::array_t<double> from_samples(const std::vector<double>& s) {
  py::array_t<double> out(static_cast<py::ssize_t>(s.size()));
  std::memcpy(out.mutable_data(), s.data(), s.size() * sizeof(double));
  return out;
}

py::array_t<std::uint8_t> image_to_array(const mtt::RgbImage& img) {
  py::array_t<std::uint8_t> out({img.rows, img.cols, 3});
  auto r = out.mutable_unchecked<3>();
  const std::size_t plane = static_cast<std::size_t>(img.rows) * img.cols;
  for (int y = 0; y < img.rows; ++y) {
    for (int x = 0; x < img.cols; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * img.cols + x;
      for (int c = 0; c < 3; ++c) {
        const double v = img.v[static_cast<std::size_t>(c) * plane + i];
        r(y, x, c) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
      }
    }
  }
  return out;
}

mtt::RgbImage array_to_image(
    const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) {
    throw mtt::ValidationError("image must be an (H, W, 3) uint8 array");
  }
  mtt::RgbImage img(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  auto r = a.unchecked<3>();
  const std::size_t plane = static_cast<std::size_t>(img.rows) * img.cols;
  for (int y = 0; y < img.rows; ++y) {
    for (int x = 0; x < img.cols; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * img.cols + x;
      for (int c = 0; c < 3; ++c) {
        img.v[static_cast<std::size_t>(c) * plane + i] = r(y, x, c) / 255.0;
      }
    }
  }
  return img;
}

py::dict meta_to_dict(const mtt::SpectralMeta& m) {
  py::dict d;
  d["peak_r"] = m.peak_r;
  d["floor_db"] = m.floor_db;
  d["lambda"] = m.lambda;
  d["n_fft"] = m.n_fft;
  d["hop"] = m.hop;
  d["window_sigma"] = m.window_sigma;
  d["sample_rate"] = m.sample_rate;
  d["num_samples"] = m.num_samples;
  d["input_peak"] = m.input_peak;
  d["colormap"] = m.colormap;
  return d;
}

mtt::SpectralMeta dict_to_meta(const py::dict& d) {
  mtt::SpectralMeta m;
  m.peak_r = d["peak_r"].cast<double>();
  m.floor_db = d["floor_db"].cast<double>();
  m.lambda = d["lambda"].cast<double>();
  m.n_fft = d["n_fft"].cast<int>();
  m.hop = d["hop"].cast<int>();
  m.window_sigma = d["window_sigma"].cast<double>();
  m.sample_rate = d["sample_rate"].cast<int>();
  m.num_samples = d["num_samples"].cast<long>();
  m.input_peak = d["input_peak"].cast<double>();
  if (d.contains("colormap")) m.colormap = d["colormap"].cast<std::string>();
  m.validate();
  return m;
}

mtt::PipelineConfig make_config(int rate, int n_fft, int hop, double sigma, double lambda) {
  mtt::PipelineConfig cfg;
  cfg.sample_rate = rate;
  cfg.stft = mtt::StftParams{n_fft, hop, sigma};
  cfg.stft.validate();
  cfg.lambda = lambda;
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "audio texture transfer over spectrogram images";
  m.attr("__version__") = "1.0.0";

  py::register_exception<mtt::ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<mtt::IoError>(m, "IoError", PyExc_IOError);

  m.def(
      "pink_noise",
      [](double duration, int rate, std::uint64_t seed) {
        return from_samples(mtt::pink_noise(duration, rate, seed).samples);
      },
      py::arg("duration"), py::arg("sample_rate") = 22050, py::arg("seed") = 0);

  m.def(
      "read_wav",
      [](const std::string& path) {
        const mtt::AudioClip clip = mtt::read_wav(path);
        return py::make_tuple(from_samples(clip.samples), clip.sample_rate);
      },
      py::arg("path"));

  m.def(
      "write_wav",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& samples, int rate,
         const std::string& path) { mtt::write_wav(to_clip(samples, rate), path); },
      py::arg("samples"), py::arg("sample_rate"), py::arg("path"));

  m.def(
      "resample",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& samples, int rate,
         int target_rate) {
        return from_samples(mtt::resample(to_clip(samples, rate), target_rate).samples);
      },
      py::arg("samples"), py::arg("sample_rate"), py::arg("target_rate"));

  m.def(
      "stft_magnitude",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& samples, int rate,
         int n_fft, int hop, double sigma) {
        const mtt::ComplexSpectrogram spec =
            mtt::stft(to_clip(samples, rate), mtt::StftParams{n_fft, hop, sigma});
        const mtt::MagnitudeSpectrogram mag = mtt::magnitude(spec);
        py::array_t<double> out({mag.g.rows, mag.g.cols});
        std::memcpy(out.mutable_data(), mag.g.v.data(), mag.g.v.size() * sizeof(double));
        return out;
      },
      py::arg("samples"), py::arg("sample_rate") = 22050, py::arg("n_fft") = 2048,
      py::arg("hop") = 256, py::arg("window_sigma") = 256.0);

  m.def(
      "audio_to_image",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& samples, int rate,
         int n_fft, int hop, double sigma, double lambda, const std::string& colormap) {
        const mtt::PipelineConfig cfg = make_config(rate, n_fft, hop, sigma, lambda);
        const mtt::Colormap map = mtt::resolve_colormap(colormap);
        const mtt::ConvertResult r = mtt::audio2img(to_clip(samples, rate), cfg, map);
        return py::make_tuple(image_to_array(r.rgb), meta_to_dict(r.meta));
      },
      py::arg("samples"), py::arg("sample_rate") = 22050, py::arg("n_fft") = 2048,
      py::arg("hop") = 256, py::arg("window_sigma") = 256.0, py::arg("lambda") = 0.618,
      py::arg("colormap") = "gray");

  m.def(
      "image_to_audio",
      [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& image,
         const py::dict& meta, int gla_iters, std::uint64_t seed) {
        const mtt::SpectralMeta sm = dict_to_meta(meta);
        const mtt::Colormap map =
            mtt::resolve_colormap(sm.colormap.empty() ? "gray" : sm.colormap);
        const mtt::AudioClip out =
            mtt::img2audio(array_to_image(image), sm, map, mtt::GlaParams{gla_iters, seed});
        return from_samples(out.samples);
      },
      py::arg("image"), py::arg("meta"), py::arg("gla_iters") = 100, py::arg("seed") = 0);

  m.def(
      "griffin_lim",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& mag, int rate,
         int n_fft, int hop, double sigma, int iterations, std::uint64_t seed) {
        if (mag.ndim() != 2) throw mtt::ValidationError("magnitude must be a 2-D array");
        mtt::MagnitudeSpectrogram m2;
        m2.g = mtt::Grid(static_cast<int>(mag.shape(0)), static_cast<int>(mag.shape(1)));
        std::memcpy(m2.g.v.data(), mag.data(), m2.g.v.size() * sizeof(double));
        m2.params = mtt::StftParams{n_fft, hop, sigma};
        m2.sample_rate = rate;
        mtt::GlaResult r = mtt::griffin_lim(m2, mtt::GlaParams{iterations, seed});
        return py::make_tuple(from_samples(r.clip.samples), r.convergence);
      },
      py::arg("magnitude"), py::arg("sample_rate") = 22050, py::arg("n_fft") = 2048,
      py::arg("hop") = 256, py::arg("window_sigma") = 256.0, py::arg("iterations") = 100,
      py::arg("seed") = 0);

  m.def(
      "gram",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& x, bool normalized) {
        if (x.ndim() != 4) throw mtt::ValidationError("gram expects an (N, C, H, W) array");
        mtt::nn::NoGradGuard ng;
        mtt::nn::Tensor t = mtt::nn::Tensor::zeros(
            {static_cast<int>(x.shape(0)), static_cast<int>(x.shape(1)),
             static_cast<int>(x.shape(2)), static_cast<int>(x.shape(3))});
        std::memcpy(t.values().data(), x.data(),
                    static_cast<std::size_t>(t.numel()) * sizeof(float));
        const mtt::nn::Tensor g = mtt::nn::gram(t, normalized);
        py::array_t<float> out(
            {static_cast<py::ssize_t>(x.shape(0)), static_cast<py::ssize_t>(x.shape(1)),
             static_cast<py::ssize_t>(x.shape(1))});
        std::memcpy(out.mutable_data(), g.values().data(),
                    static_cast<std::size_t>(g.numel()) * sizeof(float));
        return out;
      },
      py::arg("x"), py::arg("normalized") = true);

  m.def(
      "init_model",
      [](const std::string& path, int base_width, std::uint64_t seed) {
        const auto layers = mtt::nn::transfer_architecture(base_width);
        mtt::nn::save_model(mtt::nn::init_transfer_model<float>(layers, seed), path);
      },
      py::arg("path"), py::arg("base_width") = 32, py::arg("seed") = 0);

  m.def(
      "transfer_image",
      [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& image,
         const std::string& model_path) {
        const mtt::nn::TransferModel model = mtt::nn::load_model(model_path);
        return image_to_array(mtt::run_transfer(model, array_to_image(image)));
      },
      py::arg("image"), py::arg("model_path"));

  m.def(
      "train_model",
      [](const std::string& content_dir, const std::string& texture_path,
         const std::string& output_path, int epochs, int batch_size, int iterations, int crop,
         int base_width, double learning_rate, double alpha, double beta, double gamma,
         std::uint64_t seed, const std::string& colormap) {
        mtt::TrainConfig cfg;
        cfg.content_dir = content_dir;
        cfg.texture_path = texture_path;
        cfg.epochs = epochs;
        cfg.batch_size = batch_size;
        cfg.iterations = iterations;
        cfg.crop = crop;
        cfg.base_width = base_width;
        cfg.learning_rate = learning_rate;
        cfg.weights = mtt::nn::LossWeights{alpha, beta, gamma};
        cfg.seed = seed;
        cfg.colormap = colormap;
        const mtt::TrainResult r = mtt::train(cfg);
        mtt::nn::save_model(r.model, output_path);
        std::vector<double> totals;
        totals.reserve(r.log.size());
        for (const auto& row : r.log) totals.push_back(row.total);
        return totals;
      },
      py::arg("content_dir"), py::arg("texture_path"), py::arg("output_path"),
      py::arg("epochs") = 1, py::arg("batch_size") = 4, py::arg("iterations") = 50,
      py::arg("crop") = 64, py::arg("base_width") = 8, py::arg("learning_rate") = 1e-3,
      py::arg("alpha") = 7.5, py::arg("beta") = 500.0, py::arg("gamma") = 200.0,
      py::arg("seed") = 0, py::arg("colormap") = "gray");
}
