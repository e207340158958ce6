#include "lma/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <random>

#include "lma/codec.hpp"
#include "lma/error.hpp"

namespace lma::nn {

const char* layer_name(LayerKind k) noexcept {
  switch (k) {
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::Relu: return "relu";
    case LayerKind::MaxPool2d: return "maxpool2d";
    case LayerKind::GlobalAvgPool: return "global_avg_pool";
    case LayerKind::Dense: return "dense";
    case LayerKind::ResidualAdd: return "residual_add";
    case LayerKind::Softmax: return "softmax";
  }
  return "?";
}

const char* label_name(Label l) noexcept { return l == Label::Corrupted ? "Corrupted" : "Benign"; }

Layer Layer::conv2d(std::uint32_t in, std::uint32_t out, std::uint32_t k, std::uint32_t stride, std::uint32_t pad) {
  Layer l;
  l.kind = LayerKind::Conv2d;
  l.in_ch = in, l.out_ch = out, l.k = k, l.stride = stride, l.pad = pad;
  l.weights.assign(std::size_t{out} * in * k * k, 0.0f);
  l.bias.assign(out, 0.0f);
  return l;
}

Layer Layer::dense(std::uint32_t in, std::uint32_t out) {
  Layer l;
  l.kind = LayerKind::Dense;
  l.in_ch = in, l.out_ch = out;
  l.weights.assign(std::size_t{out} * in, 0.0f);
  l.bias.assign(out, 0.0f);
  return l;
}

Layer Layer::maxpool(std::uint32_t k, std::uint32_t stride) {
  Layer l;
  l.kind = LayerKind::MaxPool2d;
  l.k = k, l.stride = stride;
  return l;
}

Layer Layer::residual(std::uint32_t from) {
  Layer l;
  l.kind = LayerKind::ResidualAdd;
  l.from = from;
  return l;
}

Layer Layer::simple(LayerKind kind) {
  Layer l;
  l.kind = kind;
  return l;
}

namespace {

[[noreturn]] void shape_error(std::size_t i, const std::string& why) {
  throw Error(Errc::ShapeMismatch, "layer " + std::to_string(i) + ": " + why);
}

std::size_t expected_weights(const Layer& l) {
  switch (l.kind) {
    case LayerKind::Conv2d: return std::size_t{l.out_ch} * l.in_ch * l.k * l.k;
    case LayerKind::Dense: return std::size_t{l.out_ch} * l.in_ch;
    default: return 0;
  }
}

std::size_t expected_bias(const Layer& l) {
  return (l.kind == LayerKind::Conv2d || l.kind == LayerKind::Dense) ? l.out_ch : 0;
}

}  // namespace

// Load-time shape checks. Spatial size depends on the input side, so it is
// tracked symbolically: `spatial` changes whenever a layer may alter it and
// kOnePixel marks the 1x1 maps after pooling or dense layers.
ModelGraph::ModelGraph(std::vector<Layer> layers) : layers_(std::move(layers)) {
  constexpr int kOnePixel = -1;
  struct Sym {
    std::uint32_t c;
    int spatial;
  };
  if (layers_.empty()) throw Error(Errc::ShapeMismatch, "model has no layers");
  std::vector<Sym> out;
  Sym cur{1, 0};
  int next_spatial = 1;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    if (l.weights.size() != expected_weights(l) || l.bias.size() != expected_bias(l))
      shape_error(i, "parameter count does not match declared shape");
    switch (l.kind) {
      case LayerKind::Conv2d:
        if (l.in_ch != cur.c) shape_error(i, "conv2d expects " + std::to_string(l.in_ch) + " channels, got " + std::to_string(cur.c));
        if (l.k == 0 || l.stride == 0 || l.out_ch == 0) shape_error(i, "conv2d with zero dimension");
        cur.c = l.out_ch;
        if (!(l.stride == 1 && l.k == 2 * l.pad + 1)) cur.spatial = next_spatial++;
        break;
      case LayerKind::MaxPool2d:
        if (l.k == 0 || l.stride == 0) shape_error(i, "maxpool2d with zero dimension");
        if (!(l.k == 1 && l.stride == 1)) cur.spatial = next_spatial++;
        break;
      case LayerKind::GlobalAvgPool: cur.spatial = kOnePixel; break;
      case LayerKind::Dense:
        if (l.in_ch == 0 || l.out_ch == 0) shape_error(i, "dense with zero dimension");
        if (cur.spatial == kOnePixel && l.in_ch != cur.c)
          shape_error(i, "dense expects " + std::to_string(l.in_ch) + " inputs, got " + std::to_string(cur.c));
        cur = {l.out_ch, kOnePixel};
        break;
      case LayerKind::ResidualAdd:
        if (l.from >= i) shape_error(i, "residual source must precede it");
        if (out[l.from].c != cur.c || out[l.from].spatial != cur.spatial)
          shape_error(i, "residual source shape differs from current shape");
        break;
      case LayerKind::Relu:
      case LayerKind::Softmax: break;
      default: throw Error(Errc::UnknownLayerKind, "layer kind " + std::to_string(static_cast<int>(l.kind)));
    }
    out.push_back(cur);
  }
  if (cur.spatial != kOnePixel || cur.c != 2) throw Error(Errc::ShapeMismatch, "model output is not 2 logits");
}

std::size_t ModelGraph::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
  return n;
}

std::vector<Layer> small_resnet_layers() {
  std::vector<Layer> v;
  v.push_back(Layer::conv2d(1, 8, 3, 1, 1));  // 0
  v.push_back(Layer::simple(LayerKind::Relu));  // 1
  for (std::uint32_t block = 0; block < 2; ++block) {
    const auto input = static_cast<std::uint32_t>(v.size() - 1);
    v.push_back(Layer::conv2d(8, 8, 3, 1, 1));
    v.push_back(Layer::simple(LayerKind::Relu));
    v.push_back(Layer::conv2d(8, 8, 3, 1, 1));
    v.push_back(Layer::residual(input));
    v.push_back(Layer::simple(LayerKind::Relu));
    if (block == 0) v.push_back(Layer::maxpool(2, 2));
  }
  v.push_back(Layer::simple(LayerKind::GlobalAvgPool));
  v.push_back(Layer::dense(8, 2));
  v.push_back(Layer::simple(LayerKind::Softmax));
  return v;
}

void randomize(std::vector<Layer>& layers, std::uint64_t seed, float scale) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(-scale, scale);
  for (auto& l : layers) {
    for (auto& w : l.weights) w = dist(rng);
    for (auto& b : l.bias) b = dist(rng);
  }
}

// ---- weight file ----

namespace {

constexpr char kMagic[4] = {'L', 'M', 'A', 'W'};
constexpr std::uint8_t kVersion = 1;

std::vector<std::uint32_t> dims_of(const Layer& l) {
  switch (l.kind) {
    case LayerKind::Conv2d: return {l.in_ch, l.out_ch, l.k, l.stride, l.pad};
    case LayerKind::MaxPool2d: return {l.k, l.stride};
    case LayerKind::Dense: return {l.in_ch, l.out_ch};
    case LayerKind::ResidualAdd: return {l.from};
    default: return {};
  }
}

std::size_t dim_count(std::uint8_t tag) {
  switch (static_cast<LayerKind>(tag)) {
    case LayerKind::Conv2d: return 5;
    case LayerKind::MaxPool2d:
    case LayerKind::Dense: return 2;
    case LayerKind::ResidualAdd: return 1;
    case LayerKind::Relu:
    case LayerKind::GlobalAvgPool:
    case LayerKind::Softmax: return 0;
  }
  throw Error(Errc::UnknownLayerKind, "layer tag " + std::to_string(tag));
}

}  // namespace

Bytes save_model(const ModelGraph& g) {
  Bytes out(kMagic, kMagic + 4);
  out.push_back(kVersion);
  put_fixed_le<std::uint16_t>(out, static_cast<std::uint16_t>(g.depth()));
  for (const auto& l : g.layers()) {
    out.push_back(static_cast<std::uint8_t>(l.kind));
    for (auto d : dims_of(l)) put_fixed_le<std::uint32_t>(out, d);
    put_fixed_le<std::uint32_t>(out, static_cast<std::uint32_t>(l.weights.size() + l.bias.size()));
    for (float w : l.weights) put_fixed_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(w));
    for (float b : l.bias) put_fixed_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(b));
  }
  put_fixed_le<std::uint32_t>(out, crc32(out));
  return out;
}

ModelGraph load_model(ByteView bytes) {
  ByteReader r(bytes, Errc::Truncated);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw Error(Errc::BadMagic, "weight file magic is not LMAW");
  r.skip(4);
  if (std::uint8_t v = r.u8(); v != kVersion) throw Error(Errc::UnsupportedVersion, "weight file version " + std::to_string(v));
  if (bytes.size() < 4 + 4) throw Error(Errc::Truncated, "weight file too short");
  // Checksum first so structural errors on damaged files report as such.
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 4, 4);
  if (stored != crc32(bytes.subspan(0, bytes.size() - 4))) throw Error(Errc::ChecksumMismatch, "weight file CRC-32 mismatch");
  ByteReader body(bytes.subspan(0, bytes.size() - 4), Errc::Truncated);
  body.skip(5);
  std::uint16_t count = body.fixed_le<std::uint16_t>();
  std::vector<Layer> layers;
  layers.reserve(count);
  for (std::uint16_t i = 0; i < count; ++i) {
    std::uint8_t tag = body.u8();
    std::vector<std::uint32_t> d(dim_count(tag));
    for (auto& x : d) x = body.fixed_le<std::uint32_t>();
    Layer l;
    switch (static_cast<LayerKind>(tag)) {
      case LayerKind::Conv2d: l = Layer::conv2d(d[0], d[1], d[2], d[3], d[4]); break;
      case LayerKind::MaxPool2d: l = Layer::maxpool(d[0], d[1]); break;
      case LayerKind::Dense: l = Layer::dense(d[0], d[1]); break;
      case LayerKind::ResidualAdd: l = Layer::residual(d[0]); break;
      default: l = Layer::simple(static_cast<LayerKind>(tag)); break;
    }
    std::uint32_t n = body.fixed_le<std::uint32_t>();
    if (n != l.weights.size() + l.bias.size())
      shape_error(i, std::string(layer_name(l.kind)) + " declares " + std::to_string(n) + " parameters, shape needs " +
                         std::to_string(l.weights.size() + l.bias.size()));
    if (std::uint64_t{n} * 4 > body.remaining()) shape_error(i, "parameters extend past end of file");
    for (auto& w : l.weights) w = std::bit_cast<float>(body.fixed_le<std::uint32_t>());
    for (auto& b : l.bias) b = std::bit_cast<float>(body.fixed_le<std::uint32_t>());
    layers.push_back(std::move(l));
  }
  if (!body.at_end()) throw Error(Errc::ShapeMismatch, "trailing bytes after last layer");
  return ModelGraph(std::move(layers));
}

ModelGraph load_model_file(const std::string& path) {
  Bytes bytes;
  try {
    bytes = read_file(path);
  } catch (const Error& e) {
    throw Error(Errc::ModelLoadError, e.what());
  }
  return load_model(bytes);
}

// ---- operators ----

Tensor conv2d(const Tensor& in, const Layer& l) {
  if (in.c != l.in_ch) throw Error(Errc::ShapeMismatch, "conv2d channel mismatch");
  const std::int64_t H = in.h, W = in.w, K = l.k, S = l.stride, P = l.pad;
  if (H + 2 * P < K || W + 2 * P < K) throw Error(Errc::ShapeMismatch, "conv2d input smaller than kernel");
  const auto OH = static_cast<std::uint32_t>((H + 2 * P - K) / S + 1);
  const auto OW = static_cast<std::uint32_t>((W + 2 * P - K) / S + 1);
  Tensor out(l.out_ch, OH, OW);
  for (std::uint32_t oc = 0; oc < l.out_ch; ++oc) {
    float* o = out.data.data() + std::size_t{oc} * OH * OW;
    std::fill(o, o + std::size_t{OH} * OW, l.bias[oc]);
    for (std::uint32_t ic = 0; ic < l.in_ch; ++ic) {
      const float* src = in.data.data() + std::size_t{ic} * H * W;
      const float* wk = l.weights.data() + (std::size_t{oc} * l.in_ch + ic) * K * K;
      for (std::int64_t ky = 0; ky < K; ++ky) {
        for (std::int64_t kx = 0; kx < K; ++kx) {
          const float wv = wk[ky * K + kx];
          // Valid output columns: 0 <= ox*S + kx - P < W.
          std::int64_t x0 = std::max<std::int64_t>(0, (P - kx + S - 1) / S);
          std::int64_t x1 = std::min<std::int64_t>(OW, (W - 1 + P - kx) / S + 1);
          if (W - 1 + P - kx < 0) x1 = 0;
          for (std::int64_t oy = 0; oy < OH; ++oy) {
            const std::int64_t iy = oy * S + ky - P;
            if (iy < 0 || iy >= H) continue;
            const float* row = src + iy * W + kx - P;
            float* orow = o + oy * OW;
            if (S == 1) {
              for (std::int64_t ox = x0; ox < x1; ++ox) orow[ox] += wv * row[ox];
            } else {
              for (std::int64_t ox = x0; ox < x1; ++ox) orow[ox] += wv * row[ox * S];
            }
          }
        }
      }
    }
  }
  return out;
}

Tensor relu(Tensor t) {
  for (auto& v : t.data) v = v > 0.0f ? v : 0.0f;
  return t;
}

Tensor maxpool2d(const Tensor& in, const Layer& l) {
  if (in.h < l.k || in.w < l.k) throw Error(Errc::ShapeMismatch, "maxpool2d input smaller than window");
  const std::uint32_t OH = (in.h - l.k) / l.stride + 1, OW = (in.w - l.k) / l.stride + 1;
  Tensor out(in.c, OH, OW);
  for (std::uint32_t c = 0; c < in.c; ++c)
    for (std::uint32_t oy = 0; oy < OH; ++oy)
      for (std::uint32_t ox = 0; ox < OW; ++ox) {
        float m = in.at(c, oy * l.stride, ox * l.stride);
        for (std::uint32_t ky = 0; ky < l.k; ++ky)
          for (std::uint32_t kx = 0; kx < l.k; ++kx) m = std::max(m, in.at(c, oy * l.stride + ky, ox * l.stride + kx));
        out.at(c, oy, ox) = m;
      }
  return out;
}

Tensor global_avg_pool(const Tensor& in) {
  Tensor out(in.c, 1, 1);
  const std::size_t n = std::size_t{in.h} * in.w;
  for (std::uint32_t c = 0; c < in.c; ++c) {
    double s = 0;
    const float* p = in.data.data() + c * n;
    for (std::size_t i = 0; i < n; ++i) s += p[i];
    out.data[c] = static_cast<float>(s / static_cast<double>(n));
  }
  return out;
}

Tensor dense(const Tensor& in, const Layer& l) {
  if (in.data.size() != l.in_ch)
    throw Error(Errc::ShapeMismatch, "dense expects " + std::to_string(l.in_ch) + " inputs, got " + std::to_string(in.data.size()));
  Tensor out(l.out_ch, 1, 1);
  for (std::uint32_t o = 0; o < l.out_ch; ++o) {
    float s = l.bias[o];
    const float* w = l.weights.data() + std::size_t{o} * l.in_ch;
    for (std::uint32_t i = 0; i < l.in_ch; ++i) s += w[i] * in.data[i];
    out.data[o] = s;
  }
  return out;
}

Tensor residual_add(Tensor t, const Tensor& from) {
  if (t.c != from.c || t.h != from.h || t.w != from.w) throw Error(Errc::ShapeMismatch, "residual shapes differ");
  for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] += from.data[i];
  return t;
}

Tensor softmax(Tensor t) {
  if (t.data.empty()) return t;
  float m = *std::max_element(t.data.begin(), t.data.end());
  double sum = 0;
  for (auto& v : t.data) {
    v = std::exp(v - m);
    sum += v;
  }
  for (auto& v : t.data) v = static_cast<float>(v / sum);
  return t;
}

Tensor image_tensor(const MemoryImage& img) {
  Tensor t(1, img.height, img.width);
  t.data = img.pixels;
  return t;
}

Tensor forward(const ModelGraph& g, const Tensor& input, Tensor* logits) {
  const auto& layers = g.layers();
  // Keep only outputs some later residual refers to.
  std::vector<bool> keep(layers.size(), false);
  for (const auto& l : layers)
    if (l.kind == LayerKind::ResidualAdd) keep[l.from] = true;
  std::map<std::uint32_t, Tensor> saved;
  Tensor cur = input;
  for (std::uint32_t i = 0; i < layers.size(); ++i) {
    const Layer& l = layers[i];
    switch (l.kind) {
      case LayerKind::Conv2d: cur = conv2d(cur, l); break;
      case LayerKind::Relu: cur = relu(std::move(cur)); break;
      case LayerKind::MaxPool2d: cur = maxpool2d(cur, l); break;
      case LayerKind::GlobalAvgPool: cur = global_avg_pool(cur); break;
      case LayerKind::Dense: cur = dense(cur, l); break;
      case LayerKind::ResidualAdd: cur = residual_add(std::move(cur), saved.at(l.from)); break;
      case LayerKind::Softmax:
        if (logits && i + 1 == layers.size()) *logits = cur;
        cur = softmax(std::move(cur));
        break;
    }
    if (keep[i]) saved[i] = cur;
  }
  if (logits && layers.back().kind != LayerKind::Softmax) *logits = cur;
  return cur;
}

Classification classify_scores(const Tensor& output, bool is_probability) {
  if (output.data.size() != 2) throw Error(Errc::ShapeMismatch, "classifier output must have 2 values");
  Tensor p = is_probability ? output : softmax(output);
  Classification c;
  c.score = p.data[1];
  c.label = c.score >= 0.5 ? Label::Corrupted : Label::Benign;
  return c;
}

Classification infer(const ModelGraph& g, const MemoryImage& img) {
  Tensor out = forward(g, image_tensor(img));
  return classify_scores(out, g.layers().back().kind == LayerKind::Softmax);
}

// ---- backends ----

namespace {

class BuiltinBackend : public Backend {
 public:
  explicit BuiltinBackend(std::shared_ptr<const ModelGraph> m) : model_(std::move(m)) {}
  std::string name() const override { return "builtin"; }
  Classification classify(const MemoryImage& img) const override { return infer(*model_, img); }

 private:
  std::shared_ptr<const ModelGraph> model_;
};

}  // namespace

BackendRegistry::BackendRegistry() {
  factories_["builtin"] = [](std::shared_ptr<const ModelGraph> m) -> std::unique_ptr<Backend> {
    return std::make_unique<BuiltinBackend>(std::move(m));
  };
}

BackendRegistry& BackendRegistry::global() {
  static BackendRegistry reg;
  return reg;
}

void BackendRegistry::add(const std::string& name, BackendFactory factory) { factories_[name] = std::move(factory); }

bool BackendRegistry::contains(const std::string& name) const { return factories_.count(name) != 0; }

std::vector<std::string> BackendRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : factories_) out.push_back(k);
  return out;
}

std::unique_ptr<Backend> BackendRegistry::create(const std::string& name, std::shared_ptr<const ModelGraph> model) const {
  auto it = factories_.find(name);
  if (it == factories_.end()) throw Error(Errc::BackendUnavailable, "no backend named '" + name + "'");
  return it->second(std::move(model));
}

}  // namespace lma::nn
