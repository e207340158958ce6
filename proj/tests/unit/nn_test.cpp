#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <nlohmann/json.hpp>
#include <random>

#include "fixtures.hpp"
#include "lma/codec.hpp"
#include "lma/error.hpp"
#include "lma/nn.hpp"

using namespace lma;
using namespace lma::nn;

namespace {

Tensor random_tensor(std::mt19937_64& rng, std::uint32_t c, std::uint32_t h, std::uint32_t w) {
  std::uniform_real_distribution<float> d(-1, 1);
  Tensor t(c, h, w);
  for (auto& v : t.data) v = d(rng);
  return t;
}

void fill(std::mt19937_64& rng, Layer& l) {
  std::uniform_real_distribution<float> d(-1, 1);
  for (auto& v : l.weights) v = d(rng);
  for (auto& v : l.bias) v = d(rng);
}

// Direct definition with explicit zero padding, in double precision.
Tensor conv_reference(const Tensor& in, const Layer& l) {
  const int K = l.k, S = l.stride, P = l.pad;
  const int oh = (int(in.h) + 2 * P - K) / S + 1, ow = (int(in.w) + 2 * P - K) / S + 1;
  Tensor out(l.out_ch, oh, ow);
  for (int o = 0; o < int(l.out_ch); ++o)
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        double acc = l.bias[o];
        for (int i = 0; i < int(l.in_ch); ++i)
          for (int ky = 0; ky < K; ++ky)
            for (int kx = 0; kx < K; ++kx) {
              int sy = y * S + ky - P, sx = x * S + kx - P;
              if (sy < 0 || sx < 0 || sy >= int(in.h) || sx >= int(in.w)) continue;
              acc += double(l.weights[((o * l.in_ch + i) * K + ky) * K + kx]) * in.at(i, sy, sx);
            }
        out.at(o, y, x) = static_cast<float>(acc);
      }
  return out;
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
  EXPECT_EQ(a.c, b.c);
  EXPECT_EQ(a.h, b.h);
  EXPECT_EQ(a.w, b.w);
  float m = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

Bytes dense_file(std::uint32_t declared, std::uint32_t present) {
  Bytes f{'L', 'M', 'A', 'W', 1, 1, 0, 5};
  put_fixed_le<std::uint32_t>(f, 4);
  put_fixed_le<std::uint32_t>(f, 2);
  put_fixed_le<std::uint32_t>(f, declared);
  for (std::uint32_t i = 0; i < present; ++i) put_fixed_le<std::uint32_t>(f, std::bit_cast<std::uint32_t>(0.25f * i));
  put_fixed_le<std::uint32_t>(f, crc32(f));
  return f;
}

Errc load_error(ByteView b) {
  try {
    load_model(b);
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::Io;
}

}  // namespace

TEST(Nn, HandComputedConvolution) {
  Tensor in(1, 3, 3);
  std::fill(in.data.begin(), in.data.end(), 1.0f);
  Layer l = Layer::conv2d(1, 1, 2, 1, 0);
  std::fill(l.weights.begin(), l.weights.end(), 1.0f);
  Tensor out = conv2d(in, l);
  ASSERT_EQ(out.h, 2u);
  ASSERT_EQ(out.w, 2u);
  for (float v : out.data) EXPECT_EQ(v, 4.0f);
}

TEST(Nn, ConvolutionMatchesReference) {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 300; ++t) {
    std::uint32_t ci = 1 + rng() % 4, co = 1 + rng() % 4, k = 1 + rng() % 3, s = 1 + rng() % 2, p = rng() % 2;
    std::uint32_t h = std::max<std::uint32_t>(k, 1 + rng() % 8), w = std::max<std::uint32_t>(k, 1 + rng() % 8);
    Layer l = Layer::conv2d(ci, co, k, s, p);
    fill(rng, l);
    Tensor in = random_tensor(rng, ci, h, w);
    ASSERT_LT(max_abs_diff(conv2d(in, l), conv_reference(in, l)), 1e-5f);
  }
}

TEST(Nn, PoolingDenseAndResidual) {
  std::mt19937_64 rng(22);
  Tensor in = random_tensor(rng, 3, 6, 7);
  Tensor mp = maxpool2d(in, Layer::maxpool(2, 2));
  ASSERT_EQ(mp.h, 3u);
  ASSERT_EQ(mp.w, 3u);
  for (std::uint32_t c = 0; c < 3; ++c)
    for (std::uint32_t y = 0; y < 3; ++y)
      for (std::uint32_t x = 0; x < 3; ++x) {
        float m = std::max({in.at(c, 2 * y, 2 * x), in.at(c, 2 * y + 1, 2 * x), in.at(c, 2 * y, 2 * x + 1),
                            in.at(c, 2 * y + 1, 2 * x + 1)});
        EXPECT_EQ(mp.at(c, y, x), m);
      }
  Tensor g = global_avg_pool(in);
  for (std::uint32_t c = 0; c < 3; ++c) {
    double s = 0;
    for (std::uint32_t y = 0; y < 6; ++y)
      for (std::uint32_t x = 0; x < 7; ++x) s += in.at(c, y, x);
    EXPECT_NEAR(g.data[c], s / 42, 1e-6);
  }
  Layer d = Layer::dense(3, 2);
  fill(rng, d);
  Tensor o = dense(g, d);
  for (int j = 0; j < 2; ++j) {
    double s = d.bias[j];
    for (int i = 0; i < 3; ++i) s += double(d.weights[j * 3 + i]) * g.data[i];
    EXPECT_NEAR(o.data[j], s, 1e-6);
  }
  Tensor r = relu(in);
  for (std::size_t i = 0; i < in.data.size(); ++i) EXPECT_EQ(r.data[i], std::max(0.0f, in.data[i]));
  Tensor sum = residual_add(in, r);
  for (std::size_t i = 0; i < in.data.size(); ++i) EXPECT_EQ(sum.data[i], in.data[i] + r.data[i]);
  EXPECT_THROW(residual_add(in, mp), Error);
}

TEST(Nn, SoftmaxNormalizes) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<float> d(-50, 50);
  for (int t = 0; t < 1000; ++t) {
    Tensor x(2, 1, 1);
    x.data = {d(rng), d(rng)};
    Tensor p = softmax(x);
    EXPECT_NEAR(double(p.data[0]) + p.data[1], 1.0, 1e-6);
    EXPECT_GE(p.data[0], 0.0f);
  }
}

TEST(Nn, TieGoesToCorrupted) {
  Layer d = Layer::dense(2, 2);
  d.weights = {1, 0, 0, 1};
  Tensor x(2, 1, 1);
  x.data = {0, 0};
  Tensor p = softmax(dense(x, d));
  Classification c = classify_scores(p, true);
  EXPECT_EQ(c.score, 0.5);
  EXPECT_EQ(c.label, Label::Corrupted);
  Tensor lo(2, 1, 1);
  lo.data = {0.6f, 0.4f};
  EXPECT_EQ(classify_scores(lo, true).label, Label::Benign);
}

TEST(Nn, WeightFileExamples) {
  Bytes ok = dense_file(10, 10);
  ModelGraph g = load_model(ok);
  EXPECT_EQ(g.depth(), 1u);
  EXPECT_EQ(g.parameter_count(), 10u);
  EXPECT_EQ(save_model(g), ok);
  EXPECT_EQ(load_error(dense_file(9, 9)), Errc::ShapeMismatch);
  EXPECT_EQ(load_error(dense_file(10, 9)), Errc::ShapeMismatch);
  Bytes bad = ok;
  bad[12] ^= 1;
  EXPECT_EQ(load_error(bad), Errc::ChecksumMismatch);
  bad = ok;
  bad[0] = 'X';
  EXPECT_EQ(load_error(bad), Errc::BadMagic);
  bad = ok;
  bad[7] = 42;  // layer tag
  bad.resize(bad.size() - 4);
  put_fixed_le<std::uint32_t>(bad, crc32(ByteView(bad)));
  EXPECT_EQ(load_error(bad), Errc::UnknownLayerKind);
}

TEST(Nn, SmallResnetRoundTrip) {
  auto layers = small_resnet_layers();
  randomize(layers, 5);
  ModelGraph g(layers);
  EXPECT_EQ(g.depth(), 16u);
  EXPECT_EQ(g.parameter_count(), 2434u);
  Bytes f = save_model(g);
  ModelGraph h = load_model(f);
  EXPECT_EQ(save_model(h), f);
  std::mt19937_64 rng(24);
  MemoryImage img{128, 128, std::vector<float>(128 * 128)};
  for (auto& v : img.pixels) v = static_cast<float>(rng() % 256) / 255.0f;
  EXPECT_EQ(infer(g, img), infer(h, img));
}

TEST(Nn, ResidualShapeIsCheckedAtLoad) {
  auto layers = small_resnet_layers();
  // Block 2 adds the pre-pool activation to the pooled one.
  layers[11] = Layer::residual(6);
  EXPECT_THROW(ModelGraph{layers}, Error);
  auto fwd = small_resnet_layers();
  fwd[5] = Layer::residual(5);
  EXPECT_THROW(ModelGraph{fwd}, Error);
  // Channel mismatch between residual source and target.
  std::vector<Layer> ch{Layer::conv2d(1, 4, 3, 1, 1), Layer::conv2d(4, 8, 3, 1, 1), Layer::residual(0),
                        Layer::simple(LayerKind::GlobalAvgPool), Layer::dense(8, 2)};
  try {
    ModelGraph{ch};
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ShapeMismatch);
  }
  // A stride-2 conv changes spatial size even with equal channels.
  std::vector<Layer> sp{Layer::conv2d(1, 4, 3, 1, 1), Layer::conv2d(4, 4, 3, 2, 1), Layer::residual(0),
                        Layer::simple(LayerKind::GlobalAvgPool), Layer::dense(4, 2)};
  EXPECT_THROW(ModelGraph{sp}, Error);
  std::vector<Layer> fine{Layer::conv2d(1, 4, 3, 1, 1), Layer::conv2d(4, 4, 3, 1, 1), Layer::residual(0),
                          Layer::simple(LayerKind::GlobalAvgPool), Layer::dense(4, 2)};
  EXPECT_NO_THROW(ModelGraph{fine});
}

TEST(Nn, OutputMustBeTwoLogits) {
  std::vector<Layer> three{Layer::simple(LayerKind::GlobalAvgPool), Layer::dense(1, 3)};
  EXPECT_THROW(ModelGraph{three}, Error);
}

TEST(Nn, BackendRegistry) {
  auto& reg = BackendRegistry::global();
  EXPECT_TRUE(reg.contains("builtin"));
  auto layers = small_resnet_layers();
  randomize(layers, 6);
  auto model = std::make_shared<const ModelGraph>(layers);
  auto b = reg.create("builtin", model);
  EXPECT_EQ(b->name(), "builtin");
  MemoryImage img{128, 128, std::vector<float>(128 * 128, 0.3f)};
  EXPECT_EQ(b->classify(img), b->classify(img));
  try {
    reg.create("gpu", model);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::BackendUnavailable);
  }
}

TEST(Nn, ImageSideMustMatchInputHandling) {
  // The graph is side-agnostic until a dense layer sees a wrong size.
  std::vector<Layer> flat{Layer::dense(16, 2)};
  ModelGraph g(flat);
  MemoryImage ok{4, 4, std::vector<float>(16, 0.1f)};
  EXPECT_NO_THROW(infer(g, ok));
  MemoryImage wrong{5, 5, std::vector<float>(25, 0.1f)};
  try {
    infer(g, wrong);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ShapeMismatch);
  }
}

TEST(Nn, GoldenLogitsFromReferenceImplementation) {
  ModelGraph g = load_model_file(test::fixture("models/detector.lmaw").string());
  Bytes images = test::load_fixture("models/golden_images.bin");
  Bytes jtext = test::load_fixture("models/golden_logits.json");
  auto j = nlohmann::json::parse(jtext.begin(), jtext.end());
  const std::uint32_t side = j["side"];
  const std::size_t count = j["count"];
  ASSERT_EQ(images.size(), count * side * side);
  float worst = 0;
  for (std::size_t n = 0; n < count; ++n) {
    MemoryImage img{side, side, {}};
    for (std::size_t i = 0; i < std::size_t{side} * side; ++i)
      img.pixels.push_back(static_cast<float>(images[n * side * side + i]) / 255.0f);
    Tensor logits;
    forward(g, image_tensor(img), &logits);
    ASSERT_EQ(logits.data.size(), 2u);
    for (int k = 0; k < 2; ++k) worst = std::max(worst, std::abs(logits.data[k] - j["logits"][n][k].get<float>()));
  }
  EXPECT_LT(worst, 1e-4f);
}

TEST(Nn, InferenceThroughputSanity) {
  auto layers = small_resnet_layers();
  randomize(layers, 7);
  ModelGraph g(layers);
  MemoryImage img{128, 128, std::vector<float>(128 * 128, 0.5f)};
  infer(g, img);
  auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < 5; ++i) infer(g, img);
  double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count() / 5;
  EXPECT_LT(ms, 100.0);
}
