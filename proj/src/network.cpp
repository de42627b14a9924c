#include "mtt/network.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <zlib.h>

#include "mtt/errors.hpp"
#include "mtt/rng.hpp"

namespace mtt::nn {

namespace {

constexpr char kMagic[5] = {'M', 'T', 'T', 'X', '1'};

LayerSpec conv_spec(int k, int s, int ic, int oc) {
  return {LayerKind::Conv, k, s, ic, oc, 0};
}
LayerSpec convt_spec(int k, int s, int ic, int oc, int op) {
  return {LayerKind::ConvTranspose, k, s, ic, oc, op};
}
LayerSpec in_spec(int c) { return {LayerKind::InstanceNorm, 0, 1, c, c, 0}; }

template <typename T>
TensorT<T> kaiming_uniform(Shape shape, long fan_in, std::mt19937_64& g) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  TensorT<T> t = TensorT<T>::zeros(std::move(shape));
  for (auto& v : t.values()) v = static_cast<T>(uniform_range(g, -bound, bound));
  return t;
}

template <typename T>
std::vector<TensorT<T>> init_layer_params(const LayerSpec& l, std::mt19937_64& g) {
  switch (l.kind) {
    case LayerKind::Conv:
      return {kaiming_uniform<T>({l.out_ch, l.in_ch, l.kernel, l.kernel},
                                 static_cast<long>(l.in_ch) * l.kernel * l.kernel, g),
              TensorT<T>::zeros({l.out_ch})};
    case LayerKind::ConvTranspose:
      return {kaiming_uniform<T>({l.in_ch, l.out_ch, l.kernel, l.kernel},
                                 static_cast<long>(l.in_ch) * l.kernel * l.kernel, g),
              TensorT<T>::zeros({l.out_ch})};
    case LayerKind::InstanceNorm:
      return {TensorT<T>::full({l.out_ch}, T{1}), TensorT<T>::zeros({l.out_ch})};
    case LayerKind::Residual: {
      std::vector<TensorT<T>> p;
      for (int half = 0; half < 2; ++half) {
        p.push_back(kaiming_uniform<T>({l.out_ch, l.in_ch, 3, 3},
                                       static_cast<long>(l.in_ch) * 9, g));
        p.push_back(TensorT<T>::zeros({l.out_ch}));
        p.push_back(TensorT<T>::full({l.out_ch}, T{1}));
        p.push_back(TensorT<T>::zeros({l.out_ch}));
      }
      return p;
    }
    case LayerKind::Relu:
    case LayerKind::Tanh:
      return {};
  }
  throw ValidationError("init: unknown layer kind");
}

std::vector<Shape> expected_param_shapes(const LayerSpec& l) {
  switch (l.kind) {
    case LayerKind::Conv:
      return {{l.out_ch, l.in_ch, l.kernel, l.kernel}, {l.out_ch}};
    case LayerKind::ConvTranspose:
      return {{l.in_ch, l.out_ch, l.kernel, l.kernel}, {l.out_ch}};
    case LayerKind::InstanceNorm:
      return {{l.out_ch}, {l.out_ch}};
    case LayerKind::Residual: {
      std::vector<Shape> s;
      for (int half = 0; half < 2; ++half) {
        s.push_back({l.out_ch, l.in_ch, 3, 3});
        s.push_back({l.out_ch});
        s.push_back({l.out_ch});
        s.push_back({l.out_ch});
      }
      return s;
    }
    case LayerKind::Relu:
    case LayerKind::Tanh:
      return {};
  }
  throw ValidationError("layer: unknown kind");
}

void validate_layer(const LayerSpec& l) {
  switch (l.kind) {
    case LayerKind::Conv:
    case LayerKind::ConvTranspose:
      if (l.kernel < 1 || l.kernel % 2 == 0) {
        throw ValidationError("layer: kernel must be odd and positive");
      }
      if (l.stride < 1) throw ValidationError("layer: stride must be >= 1");
      if (l.in_ch < 1 || l.out_ch < 1) throw ValidationError("layer: channels must be positive");
      if (l.kind == LayerKind::Conv && l.output_pad != 0) {
        throw ValidationError("layer: output_pad only applies to conv_transpose");
      }
      if (l.kind == LayerKind::ConvTranspose && (l.output_pad < 0 || l.output_pad >= l.stride)) {
        throw ValidationError("layer: output_pad must be in [0, stride)");
      }
      break;
    case LayerKind::InstanceNorm:
    case LayerKind::Residual:
      if (l.in_ch < 1 || l.in_ch != l.out_ch) {
        throw ValidationError("layer: in_ch must equal out_ch and be positive");
      }
      break;
    case LayerKind::Relu:
    case LayerKind::Tanh:
      break;
    default:
      throw ValidationError("layer: unknown kind");
  }
}

template <typename T>
void validate_model(const TransferModelT<T>& model) {
  if (model.layers.size() != model.params.size()) {
    throw FormatError("model: layer/parameter count mismatch");
  }
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    validate_layer(model.layers[i]);
    const auto expect = expected_param_shapes(model.layers[i]);
    const auto& have = model.params[i];
    if (have.size() != expect.size()) {
      throw FormatError("model: wrong parameter count for layer " + std::to_string(i));
    }
    for (std::size_t j = 0; j < have.size(); ++j) {
      if (!have[j].defined() || have[j].shape() != expect[j]) {
        throw FormatError("model: parameter shape mismatch at layer " + std::to_string(i));
      }
    }
  }
}

// --- little-endian byte stream helpers ---

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 24) & 0xff));
}

void put_i32(std::vector<unsigned char>& out, std::int32_t v) {
  put_u32(out, static_cast<std::uint32_t>(v));
}

struct ByteReader {
  const unsigned char* p;
  std::size_t len;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > len) throw TruncatedFileError("model file ends inside a field");
  }
  std::uint8_t u8() {
    need(1);
    return p[pos++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = static_cast<std::uint32_t>(p[pos]) |
                      (static_cast<std::uint32_t>(p[pos + 1]) << 8) |
                      (static_cast<std::uint32_t>(p[pos + 2]) << 16) |
                      (static_cast<std::uint32_t>(p[pos + 3]) << 24);
    pos += 4;
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
};

}  // namespace

std::vector<LayerSpec> transfer_architecture(int base_width) {
  if (base_width < 1) throw ValidationError("architecture: base width must be positive");
  const int w1 = base_width, w2 = 2 * base_width, w4 = 4 * base_width;
  std::vector<LayerSpec> layers;
  layers.push_back(conv_spec(9, 1, 3, w1));
  layers.push_back(in_spec(w1));
  layers.push_back({LayerKind::Relu});
  layers.push_back(conv_spec(3, 2, w1, w2));
  layers.push_back(in_spec(w2));
  layers.push_back({LayerKind::Relu});
  layers.push_back(conv_spec(3, 2, w2, w4));
  layers.push_back(in_spec(w4));
  layers.push_back({LayerKind::Relu});
  for (int i = 0; i < 5; ++i) layers.push_back({LayerKind::Residual, 3, 1, w4, w4, 0});
  layers.push_back(convt_spec(3, 2, w4, w2, 1));
  layers.push_back(in_spec(w2));
  layers.push_back({LayerKind::Relu});
  layers.push_back(convt_spec(3, 2, w2, w1, 1));
  layers.push_back(in_spec(w1));
  layers.push_back({LayerKind::Relu});
  layers.push_back(convt_spec(9, 1, w1, 3, 0));
  layers.push_back({LayerKind::Tanh});
  return layers;
}

template <typename T>
TransferModelT<T> init_transfer_model(const std::vector<LayerSpec>& layers, std::uint64_t seed) {
  for (const auto& l : layers) validate_layer(l);
  TransferModelT<T> model;
  model.layers = layers;
  std::mt19937_64 g(seed);
  model.params.reserve(layers.size());
  for (const auto& l : layers) model.params.push_back(init_layer_params<T>(l, g));
  return model;
}

template <typename T>
TensorT<T> transfer_forward(const TransferModelT<T>& model, const TensorT<T>& x) {
  if (!x.defined() || x.rank() != 4 || x.dim(1) != 3) {
    throw ValidationError("transfer: input must be (N, 3, H, W)");
  }
  validate_model(model);
  TensorT<T> h = x;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const LayerSpec& l = model.layers[i];
    const auto& p = model.params[i];
    switch (l.kind) {
      case LayerKind::Conv:
        h = conv2d(h, p[0], p[1], l.stride, l.kernel / 2);
        break;
      case LayerKind::ConvTranspose:
        h = conv_transpose2d(h, p[0], p[1], l.stride, l.kernel / 2, l.output_pad);
        break;
      case LayerKind::InstanceNorm:
        h = instance_norm(h, p[0], p[1]);
        break;
      case LayerKind::Relu:
        h = relu(h);
        break;
      case LayerKind::Tanh:
        h = tanh_op(h);
        break;
      case LayerKind::Residual: {
        TensorT<T> r = conv2d(h, p[0], p[1], 1, 1);
        r = instance_norm(r, p[2], p[3]);
        r = relu(r);
        r = conv2d(r, p[4], p[5], 1, 1);
        r = instance_norm(r, p[6], p[7]);
        h = add(h, r);
        break;
      }
    }
  }
  if (!model.layers.empty() && model.layers.back().kind == LayerKind::Tanh) {
    h = affine(h, static_cast<T>(0.5), static_cast<T>(0.5));  // [-1, 1] -> [0, 1]
  }
  return h;
}

template <typename T>
std::vector<TensorT<T>*> parameters(TransferModelT<T>& model) {
  std::vector<TensorT<T>*> out;
  for (auto& layer : model.params) {
    for (auto& p : layer) out.push_back(&p);
  }
  return out;
}

template <typename T>
void set_parameters_requires_grad(TransferModelT<T>& model, bool rg) {
  for (auto* p : parameters(model)) p->set_requires_grad(rg);
}

void save_model(const TransferModel& model, const std::filesystem::path& path) {
  validate_model(model);

  std::vector<unsigned char> descriptor;
  put_u32(descriptor, static_cast<std::uint32_t>(model.layers.size()));
  for (const auto& l : model.layers) {
    descriptor.push_back(static_cast<unsigned char>(l.kind));
    put_i32(descriptor, l.kernel);
    put_i32(descriptor, l.stride);
    put_i32(descriptor, l.in_ch);
    put_i32(descriptor, l.out_ch);
    put_i32(descriptor, l.output_pad);
  }

  std::vector<unsigned char> body;
  put_u32(body, static_cast<std::uint32_t>(descriptor.size()));
  body.insert(body.end(), descriptor.begin(), descriptor.end());

  std::uint32_t blob_count = 0;
  for (const auto& layer : model.params) blob_count += static_cast<std::uint32_t>(layer.size());
  put_u32(body, blob_count);
  for (const auto& layer : model.params) {
    for (const auto& p : layer) {
      put_u32(body, static_cast<std::uint32_t>(p.rank()));
      for (int d = 0; d < p.rank(); ++d) put_u32(body, static_cast<std::uint32_t>(p.dim(d)));
      const std::size_t off = body.size();
      body.resize(off + p.values().size() * 4);
      std::memcpy(body.data() + off, p.data(), p.values().size() * 4);
    }
  }

  const auto crc = static_cast<std::uint32_t>(
      crc32(0L, body.data(), static_cast<uInt>(body.size())));
  put_u32(body, crc);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f.write(kMagic, sizeof(kMagic));
  f.write(reinterpret_cast<const char*>(body.data()), static_cast<std::streamsize>(body.size()));
  if (!f) throw IoError("write failure: " + path.string());
}

TransferModel load_model(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open model file: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  if (f.bad()) throw IoError("read failure: " + path.string());

  if (bytes.size() < sizeof(kMagic) + 4 ||
      std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw UnsupportedFormatError("not a model file of a supported version: " + path.string());
  }

  const unsigned char* body = bytes.data() + sizeof(kMagic);
  const std::size_t body_len = bytes.size() - sizeof(kMagic) - 4;
  const std::uint32_t stored_crc =
      static_cast<std::uint32_t>(bytes[bytes.size() - 4]) |
      (static_cast<std::uint32_t>(bytes[bytes.size() - 3]) << 8) |
      (static_cast<std::uint32_t>(bytes[bytes.size() - 2]) << 16) |
      (static_cast<std::uint32_t>(bytes[bytes.size() - 1]) << 24);
  const auto actual_crc =
      static_cast<std::uint32_t>(crc32(0L, body, static_cast<uInt>(body_len)));
  if (stored_crc != actual_crc) {
    throw ChecksumError("model checksum mismatch: " + path.string());
  }

  ByteReader r{body, body_len};
  const std::uint32_t descriptor_len = r.u32();
  if (descriptor_len > body_len - r.pos) throw TruncatedFileError("model descriptor truncated");
  const std::size_t descriptor_end = r.pos + descriptor_len;

  TransferModel model;
  const std::uint32_t n_layers = r.u32();
  model.layers.reserve(n_layers);
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    LayerSpec l;
    const std::uint8_t kind = r.u8();
    if (kind > static_cast<std::uint8_t>(LayerKind::Residual)) {
      throw FormatError("model: unknown layer kind " + std::to_string(kind));
    }
    l.kind = static_cast<LayerKind>(kind);
    l.kernel = r.i32();
    l.stride = r.i32();
    l.in_ch = r.i32();
    l.out_ch = r.i32();
    l.output_pad = r.i32();
    model.layers.push_back(l);
  }
  if (r.pos != descriptor_end) throw FormatError("model: descriptor length mismatch");

  const std::uint32_t blob_count = r.u32();
  std::vector<Tensor> blobs;
  blobs.reserve(blob_count);
  for (std::uint32_t i = 0; i < blob_count; ++i) {
    const std::uint32_t ndim = r.u32();
    if (ndim < 1 || ndim > 4) throw FormatError("model: blob rank out of range");
    Shape shape;
    long numel = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      const std::uint32_t dim = r.u32();
      if (dim == 0 || dim > (1u << 24)) throw FormatError("model: blob dimension out of range");
      shape.push_back(static_cast<int>(dim));
      numel *= dim;
    }
    r.need(static_cast<std::size_t>(numel) * 4);
    std::vector<float> values(static_cast<std::size_t>(numel));
    std::memcpy(values.data(), r.p + r.pos, values.size() * 4);
    r.pos += values.size() * 4;
    blobs.push_back(Tensor::from(std::move(shape), std::move(values)));
  }
  if (r.pos != r.len) throw FormatError("model: trailing bytes after blobs");

  std::size_t next = 0;
  for (const auto& l : model.layers) {
    const auto proto = expected_param_shapes(l);
    std::vector<Tensor> layer_params;
    for (std::size_t j = 0; j < proto.size(); ++j) {
      if (next >= blobs.size()) throw FormatError("model: not enough parameter blobs");
      layer_params.push_back(blobs[next++]);
    }
    model.params.push_back(std::move(layer_params));
  }
  if (next != blobs.size()) throw FormatError("model: unused parameter blobs");
  validate_model(model);
  return model;
}

#define MTT_INSTANTIATE_NET(T)                                                               \
  template TransferModelT<T> init_transfer_model<T>(const std::vector<LayerSpec>&,           \
                                                    std::uint64_t);                          \
  template TensorT<T> transfer_forward<T>(const TransferModelT<T>&, const TensorT<T>&);      \
  template std::vector<TensorT<T>*> parameters<T>(TransferModelT<T>&);                       \
  template void set_parameters_requires_grad<T>(TransferModelT<T>&, bool);

MTT_INSTANTIATE_NET(float)
MTT_INSTANTIATE_NET(double)

#undef MTT_INSTANTIATE_NET

}  // namespace mtt::nn
