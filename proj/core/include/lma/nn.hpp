#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "lma/bytes.hpp"
#include "lma/image.hpp"

namespace lma::nn {

enum class LayerKind : std::uint8_t {
  Conv2d = 1,
  Relu = 2,
  MaxPool2d = 3,
  GlobalAvgPool = 4,
  Dense = 5,
  ResidualAdd = 6,
  Softmax = 7,
};

const char* layer_name(LayerKind k) noexcept;

struct Layer {
  LayerKind kind = LayerKind::Relu;
  // conv2d
  std::uint32_t in_ch = 0, out_ch = 0, k = 0, stride = 1, pad = 0;
  // maxpool2d reuses k / stride; dense uses in_ch / out_ch as in / out
  // residual_add
  std::uint32_t from = 0;
  /// conv: [out][in][k][k]; dense: [out][in]
  std::vector<float> weights;
  std::vector<float> bias;

  static Layer conv2d(std::uint32_t in, std::uint32_t out, std::uint32_t k, std::uint32_t stride, std::uint32_t pad);
  static Layer dense(std::uint32_t in, std::uint32_t out);
  static Layer maxpool(std::uint32_t k, std::uint32_t stride);
  static Layer residual(std::uint32_t from);
  static Layer simple(LayerKind kind);
};

/// Channel-major activation tensor.
struct Tensor {
  std::uint32_t c = 0, h = 0, w = 0;
  std::vector<float> data;

  Tensor() = default;
  Tensor(std::uint32_t c_, std::uint32_t h_, std::uint32_t w_) : c(c_), h(h_), w(w_), data(std::size_t{c_} * h_ * w_) {}
  float& at(std::uint32_t ch, std::uint32_t y, std::uint32_t x) { return data[(std::size_t{ch} * h + y) * w + x]; }
  float at(std::uint32_t ch, std::uint32_t y, std::uint32_t x) const { return data[(std::size_t{ch} * h + y) * w + x]; }
};

/// A validated layer sequence. Immutable once built; share freely.
class ModelGraph {
 public:
  /// Validates channel chaining, parameter counts and residual shapes.
  explicit ModelGraph(std::vector<Layer> layers);

  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::size_t depth() const noexcept { return layers_.size(); }
  std::size_t parameter_count() const noexcept;

 private:
  std::vector<Layer> layers_;
};

/// Default desk-scale classifier with zero-initialized parameters.
std::vector<Layer> small_resnet_layers();
/// Fills every weight and bias with uniform values in [-scale, scale].
void randomize(std::vector<Layer>& layers, std::uint64_t seed, float scale = 0.3f);

// Weight file (.lmaw).
Bytes save_model(const ModelGraph& g);
/// Throws BadMagic, UnsupportedVersion, ShapeMismatch, ChecksumMismatch,
/// UnknownLayerKind or Truncated.
ModelGraph load_model(ByteView bytes);
ModelGraph load_model_file(const std::string& path);  // ModelLoadError on I/O

// Individual operators, exposed for testing.
Tensor conv2d(const Tensor& in, const Layer& l);
Tensor relu(Tensor t);
Tensor maxpool2d(const Tensor& in, const Layer& l);
Tensor global_avg_pool(const Tensor& in);
Tensor dense(const Tensor& in, const Layer& l);
Tensor residual_add(Tensor t, const Tensor& from);
Tensor softmax(Tensor t);

/// Runs every layer; returns the final output (probabilities when the graph
/// ends in softmax). `logits` receives the input of a trailing softmax.
Tensor forward(const ModelGraph& g, const Tensor& input, Tensor* logits = nullptr);
Tensor image_tensor(const MemoryImage& img);

enum class Label : std::uint8_t { Benign = 0, Corrupted = 1 };
const char* label_name(Label l) noexcept;

struct Classification {
  Label label = Label::Benign;
  double score = 0;  // probability of Corrupted
  bool operator==(const Classification&) const = default;
};

/// Score ties at 0.5 go to Corrupted.
Classification classify_scores(const Tensor& output, bool is_probability);
Classification infer(const ModelGraph& g, const MemoryImage& img);

class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string name() const = 0;
  virtual Classification classify(const MemoryImage& img) const = 0;
};

using BackendFactory = std::function<std::unique_ptr<Backend>(std::shared_ptr<const ModelGraph>)>;

/// Name -> factory table. "builtin" is always present.
class BackendRegistry {
 public:
  static BackendRegistry& global();
  void add(const std::string& name, BackendFactory factory);
  bool contains(const std::string& name) const;
  std::vector<std::string> names() const;
  /// Throws BackendUnavailable for unknown names.
  std::unique_ptr<Backend> create(const std::string& name, std::shared_ptr<const ModelGraph> model) const;

 private:
  BackendRegistry();
  std::map<std::string, BackendFactory> factories_;
};

}  // namespace lma::nn
