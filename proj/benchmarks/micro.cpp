// Microbenchmarks for the hot paths: codec, image transform, inference and
// the interpreter running an instrumented kernel.

#include <benchmark/benchmark.h>

#include <filesystem>
#include <random>

#include "lma/attester.hpp"
#include "lma/codec.hpp"
#include "lma/image.hpp"
#include "lma/instrument.hpp"
#include "lma/nn.hpp"
#include "lma/wasm/validator.hpp"

using namespace lma;

namespace {

// Pages with 1% of bytes live, clustered the way heap objects are.
Bytes sparse_memory(std::size_t pages) {
  std::mt19937_64 rng(1);
  Bytes m(pages * 65536, 0);
  for (std::size_t filled = 0; filled < m.size() / 100;) {
    const std::size_t len = 16 + rng() % 49, at = rng() % (m.size() - len);
    for (std::size_t k = 0; k < len; ++k) m[at + k] = static_cast<std::uint8_t>(1 + rng() % 255);
    filled += len;
  }
  return m;
}

void BM_RleEncode(benchmark::State& st) {
  const Bytes m = sparse_memory(st.range(0));
  for (auto _ : st) benchmark::DoNotOptimize(rle_encode(m));
  st.SetBytesProcessed(st.iterations() * m.size());
}
BENCHMARK(BM_RleEncode)->Arg(1)->Arg(16)->Arg(256);

void BM_RleDecode(benchmark::State& st) {
  const Bytes m = sparse_memory(st.range(0));
  const Bytes enc = rle_encode(m);
  for (auto _ : st) benchmark::DoNotOptimize(rle_decode(enc, m.size()));
  st.SetBytesProcessed(st.iterations() * m.size());
}
BENCHMARK(BM_RleDecode)->Arg(1)->Arg(16)->Arg(256);

void BM_FrameAndParse(benchmark::State& st) {
  const Bytes m = sparse_memory(16);
  const SnapshotRecord rec = make_record(SessionId{}, 0, 0, m);
  for (auto _ : st) benchmark::DoNotOptimize(parse_record(frame_record(rec)));
}
BENCHMARK(BM_FrameAndParse);

void BM_ToImage(benchmark::State& st) {
  const Bytes m = sparse_memory(st.range(0));
  for (auto _ : st) benchmark::DoNotOptimize(to_image(m));
  st.SetBytesProcessed(st.iterations() * m.size());
}
BENCHMARK(BM_ToImage)->Arg(1)->Arg(16)->Arg(256);

void BM_InferSmallResnet(benchmark::State& st) {
  auto layers = nn::small_resnet_layers();
  nn::randomize(layers, 7);
  const nn::ModelGraph g(layers);
  const MemoryImage img = to_image(sparse_memory(16));
  for (auto _ : st) benchmark::DoNotOptimize(nn::infer(g, img));
}
BENCHMARK(BM_InferSmallResnet)->Unit(benchmark::kMillisecond);

void BM_InterpretKernel(benchmark::State& st) {
  const Bytes src = read_file((std::filesystem::path(LMA_FIXTURES_DIR) / "kernels/wasm/fnv.wasm").string());
  const auto policy = static_cast<Policy>(st.range(0));
  const wasm::Module m = wasm::decode_and_validate(instrument(src, policy).wasm);
  GuestOptions g;
  g.args = {"fnv"};
  std::uint64_t hooks = 0;
  for (auto _ : st) benchmark::DoNotOptimize(run_guest(m, g, [&](wasm::Instance&, std::uint32_t) { ++hooks; }));
  st.SetLabel(policy_name(policy));
  st.counters["hooks_per_run"] = benchmark::Counter(double(hooks), benchmark::Counter::kAvgIterations);
}
BENCHMARK(BM_InterpretKernel)->DenseRange(0, 2)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
