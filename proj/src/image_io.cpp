#include "mtt/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>
#include <vector>

#include <png.h>

#include <nlohmann/json.hpp>

#include "mtt/errors.hpp"

namespace mtt {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_error_handler(png_structp png, png_const_charp msg) {
  // Jump back to the setjmp point; the message is recovered from the error_ptr.
  auto* out = static_cast<std::string*>(png_get_error_ptr(png));
  if (out) *out = msg;
  longjmp(png_jmpbuf(png), 1);
}

void png_warning_handler(png_structp, png_const_charp) {}

}  // namespace

void write_png_rgb8(const RgbImage& img, const std::filesystem::path& path) {
  if (img.rows <= 0 || img.cols <= 0) throw ValidationError("write_png: empty image");

  const std::size_t plane = img.plane_size();
  std::vector<unsigned char> bytes(3 * plane);
  for (int r = 0; r < img.rows; ++r) {
    const int flipped = img.rows - 1 - r;
    for (int c = 0; c < img.cols; ++c) {
      unsigned char* px =
          bytes.data() + (static_cast<std::size_t>(flipped) * img.cols + c) * 3;
      for (int p = 0; p < 3; ++p) {
        const double v = std::clamp(img.at(p, r, c), 0.0, 1.0);
        px[p] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
    }
  }

  FilePtr f(std::fopen(path.string().c_str(), "wb"));
  if (!f) throw IoError("cannot open for writing: " + path.string());

  std::string errmsg;
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, &errmsg, png_error_handler, png_warning_handler);
  if (!png) throw IoError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng info init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png write failed (" + errmsg + "): " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.cols), static_cast<png_uint_32>(img.rows),
               8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int r = 0; r < img.rows; ++r) {
    png_write_row(png, bytes.data() + static_cast<std::size_t>(r) * img.cols * 3);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

RgbImage read_png_rgb8(const std::filesystem::path& path) {
  FilePtr f(std::fopen(path.string().c_str(), "rb"));
  if (!f) throw IoError("cannot open png file: " + path.string());

  unsigned char sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw FormatError("not a png file: " + path.string());
  }

  std::string errmsg;
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, &errmsg, png_error_handler, png_warning_handler);
  if (!png) throw IoError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("libpng info init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("png decode failed (" + errmsg + "): " + path.string());
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  // Normalize whatever arrived to 8-bit RGB.
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  if (png_get_channels(png, info) != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("png did not normalize to RGB: " + path.string());
  }

  std::vector<unsigned char> rowbuf(static_cast<std::size_t>(width) * 3);
  RgbImage img(height, width);
  const std::size_t plane = img.plane_size();
  for (int filerow = 0; filerow < height; ++filerow) {
    png_read_row(png, rowbuf.data(), nullptr);
    const int r = height - 1 - filerow;  // undo vertical flip
    for (int c = 0; c < width; ++c) {
      for (int p = 0; p < 3; ++p) {
        img.v[static_cast<std::size_t>(p) * plane + static_cast<std::size_t>(r) * width + c] =
            rowbuf[static_cast<std::size_t>(c) * 3 + p] / 255.0;
      }
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_meta(const SpectralMeta& meta, const std::filesystem::path& path) {
  nlohmann::json j{
      {"peak_r", meta.peak_r},
      {"floor_db", meta.floor_db},
      {"lambda", meta.lambda},
      {"n_fft", meta.n_fft},
      {"hop", meta.hop},
      {"window_sigma", meta.window_sigma},
      {"sample_rate", meta.sample_rate},
      {"num_samples", meta.num_samples},
      {"input_peak", meta.input_peak},
  };
  if (!meta.colormap.empty()) j["colormap"] = meta.colormap;

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failure: " + path.string());
}

SpectralMeta read_meta(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open meta file: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("meta json parse error in " + path.string() + ": " + e.what());
  }

  SpectralMeta meta;
  try {
    meta.peak_r = j.at("peak_r").get<double>();
    meta.floor_db = j.at("floor_db").get<double>();
    meta.lambda = j.at("lambda").get<double>();
    meta.n_fft = j.at("n_fft").get<int>();
    meta.hop = j.at("hop").get<int>();
    meta.window_sigma = j.at("window_sigma").get<double>();
    meta.sample_rate = j.at("sample_rate").get<int>();
    meta.num_samples = j.at("num_samples").get<long>();
    meta.input_peak = j.at("input_peak").get<double>();
    if (j.contains("colormap")) meta.colormap = j.at("colormap").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("meta json missing/mistyped key in " + path.string() + ": " + e.what());
  }
  meta.validate();
  return meta;
}

}  // namespace mtt
