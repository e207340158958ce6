// Acceptance suite: one PASS/FAIL line per top-level criterion.
// Every check here uses its own oracle rather than the unit-test helpers.
//
// Environment:
//   LMA_ACCEPT_REPS   repetitions for the overhead ablation (default 25)
//   LMA_ACCEPT_ONLY   comma-separated criterion names to run (default all)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lma/attester.hpp"
#include "lma/bench.hpp"
#include "lma/codec.hpp"
#include "lma/dataset.hpp"
#include "lma/error.hpp"
#include "lma/eval.hpp"
#include "lma/image.hpp"
#include "lma/instrument.hpp"
#include "lma/nn.hpp"
#include "lma/verdict.hpp"
#include "lma/verifier.hpp"
#include "lma/wasm/validator.hpp"

namespace fs = std::filesystem;
using namespace lma;
using namespace lma::wasm;

namespace {

fs::path fixture(const std::string& rel) { return fs::path(LMA_FIXTURES_DIR) / rel; }

std::vector<fs::path> wasm_in(const std::string& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(fixture(dir)))
    if (e.path().extension() == ".wasm") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

// Collects the first few failure messages of a criterion.
struct Check {
  std::vector<std::string> failures;
  std::string summary;
  void expect(bool ok, const std::string& what) {
    if (!ok && failures.size() < 8) failures.push_back(what);
    if (!ok && failures.size() == 8) failures.push_back("...");
  }
  template <class E>
  void expect_error(Errc want, const std::string& what, E&& body) {
    try {
      body();
      expect(false, what + ": no error");
    } catch (const Error& e) {
      expect(e.code() == want, what + ": got " + std::string(errc_name(e.code())));
    }
  }
};

const Policy kPolicies[] = {Policy::ImportFunction, Policy::LocalFunction, Policy::MemoryInstruction};

// ---- instrumentation ----------------------------------------------------------

struct Trace {
  std::vector<std::uint64_t> events;
};

GuestOptions traced_guest(Trace& t, const Module& m) {
  GuestOptions g;
  g.stdin_data = {'a', 'c', 'c', 'e', 'p', 't', '\n'};
  g.entry = m.find_export("_start", ExternKind::Func) ? "_start" : "";
  g.extra_imports = [&t](Linker& l) {
    l.define("env", "log", FuncType{{ValType::I32}, {}},
             [&t](Instance&, std::span<const std::uint64_t> a, std::span<std::uint64_t>) { t.events.push_back(a[0]); });
    l.define("env", "tick", FuncType{{}, {}},
             [&t](Instance&, std::span<const std::uint64_t>, std::span<std::uint64_t>) { t.events.push_back(~0ull); });
    l.define_global("env", "base", 1000);
  };
  return g;
}

void instrumentation(Check& c) {
  std::vector<fs::path> corpus;
  for (auto dir : {"modules/wasm", "kernels/wasm"})
    for (auto& p : wasm_in(dir)) {
      const std::string n = p.stem().string();
      if (n == "already_instrumented" || n == "two_memories" || n.starts_with("malformed")) continue;
      corpus.push_back(p);
    }
  corpus.push_back(fixture("workload/framegen.wasm"));
  corpus.push_back(fixture("controls/pure_compute.wasm"));

  std::size_t no_imports = 0, no_stores = 0, with_start = 0, with_elems = 0, validated = 0, transparent = 0;
  for (const auto& path : corpus) {
    const Bytes in = read_file(path.string());
    const Module orig = decode_and_validate(in);
    no_imports += orig.imports.empty();
    with_start += orig.start.has_value();
    with_elems += !orig.elems.empty();
    Trace t0;
    const GuestResult base = run_guest(orig, traced_guest(t0, orig));
    for (Policy p : kPolicies) {
      const std::string tag = path.filename().string() + "/" + policy_name(p);
      InstrumentResult r;
      Module out;
      try {
        r = instrument(in, p);
        out = decode_and_validate(r.wasm);
        ++validated;
      } catch (const std::exception& e) {
        c.expect(false, tag + ": " + e.what());
        continue;
      }
      if (p == Policy::MemoryInstruction && r.report.sites_instrumented == 0) ++no_stores;
      c.expect(has_hook_import(out), tag + ": hook import missing");
      Trace t1;
      const GuestResult got = run_guest(out, traced_guest(t1, out), [](Instance&, std::uint32_t) {});
      const bool same = got.exit_code == base.exit_code && got.trap == base.trap &&
                        got.stdout_data == base.stdout_data && got.final_memory == base.final_memory &&
                        t1.events == t0.events;
      c.expect(same, tag + ": observable behaviour differs");
      transparent += same;
    }
  }
  c.expect(corpus.size() >= 10, "corpus has fewer than 10 modules");
  c.expect(no_imports > 0, "no module without imports");
  c.expect(no_stores > 0, "no module without stores");
  c.expect(with_start > 0, "no module with a start section");
  c.expect(with_elems > 0, "no module with element segments");
  const std::size_t total = corpus.size() * 3;
  std::ostringstream s;
  s << corpus.size() << " modules x 3 policies: " << validated << "/" << total << " valid, " << transparent << "/"
    << total << " transparent";
  c.summary = s.str();
}

// ---- codec --------------------------------------------------------------------

// Straight-line decoder of the token format, written independently.
bool oracle_decode(const Bytes& stream, Bytes& out) {
  out.clear();
  std::size_t p = 0;
  auto uleb = [&](std::uint64_t& v) {
    v = 0;
    for (unsigned shift = 0; shift < 64; shift += 7) {
      if (p >= stream.size()) return false;
      const std::uint8_t b = stream[p++];
      v |= std::uint64_t(b & 0x7F) << shift;
      if (!(b & 0x80)) return true;
    }
    return false;
  };
  while (p < stream.size()) {
    const std::uint8_t tag = stream[p++];
    std::uint64_t n;
    if (!uleb(n)) return false;
    if (tag == 0) {
      out.insert(out.end(), n, 0);
    } else if (tag == 1) {
      if (p + n > stream.size()) return false;
      out.insert(out.end(), stream.begin() + p, stream.begin() + p + n);
      p += n;
    } else {
      return false;
    }
  }
  return true;
}

Bytes random_buffer(std::mt19937_64& rng) {
  const std::size_t len = rng() % 131073;
  Bytes m(len, 0);
  switch (rng() % 4) {
    case 0:  // dense noise
      for (auto& b : m) b = static_cast<std::uint8_t>(rng());
      break;
    case 1:  // sparse scatter
      for (std::size_t i = 0; len && i < len / 50; ++i) m[rng() % len] = static_cast<std::uint8_t>(rng());
      break;
    case 2:  // alternating runs of zeros and data
      for (std::size_t i = 0; i < len;) {
        const std::size_t run = 1 + rng() % 300;
        const bool zero = rng() % 2;
        for (std::size_t k = 0; k < run && i < len; ++k, ++i) m[i] = zero ? 0 : static_cast<std::uint8_t>(rng());
      }
      break;
    default:  // zero runs right around the token threshold
      for (std::size_t i = 0; i < len;) {
        const std::size_t run = 1 + rng() % 6;
        const bool zero = rng() % 2;
        for (std::size_t k = 0; k < run && i < len; ++k, ++i) m[i] = zero ? 0 : 1 + rng() % 255;
      }
  }
  return m;
}

void codec(Check& c) {
  std::mt19937_64 rng(20240601);
  std::size_t ok = 0;
  for (int i = 0; i < 10000; ++i) {
    const Bytes m = random_buffer(rng);
    const Bytes enc = rle_encode(m);
    Bytes via_oracle;
    const bool a = oracle_decode(enc, via_oracle) && via_oracle == m;
    const bool b = rle_decode(enc, m.size()) == m;
    SessionId sid{};
    for (auto& x : sid) x = static_cast<std::uint8_t>(rng());
    const SnapshotRecord rec = make_record(sid, rng() >> 1, static_cast<std::uint8_t>(rng() % 3), m);
    const Bytes framed = frame_record(rec);
    std::size_t used = 0;
    const SnapshotRecord back = parse_record(framed, &used);
    const bool f = back == rec && used == framed.size() && record_memory(back) == m;
    c.expect(a && b && f, "round trip failed at case " + std::to_string(i));
    ok += a && b && f;
  }

  // Malformed payloads.
  c.expect_error(Errc::TruncatedStream, "uleb cut short", [] { rle_decode(Bytes{0x00, 0x80}, 0); });
  c.expect_error(Errc::TruncatedStream, "literal cut short", [] { rle_decode(Bytes{0x01, 0x05, 1, 2}, 5); });
  c.expect_error(Errc::MalformedToken, "unknown tag", [] { rle_decode(Bytes{0x02, 0x01}, 1); });
  c.expect_error(Errc::LengthMismatch, "short output", [] { rle_decode(Bytes{0x00, 0x08}, 9); });
  c.expect_error(Errc::LengthMismatch, "long output", [] { rle_decode(Bytes{0x00, 0x08}, 7); });

  // Malformed records.
  const SnapshotRecord rec = make_record(SessionId{1, 2, 3}, 4, 0, Bytes(300, 7));
  const Bytes good = frame_record(rec);
  auto mutated = [&](std::size_t at, std::uint8_t v) {
    Bytes b = good;
    b[at] = v;
    return b;
  };
  c.expect_error(Errc::BadMagic, "magic", [&] { parse_record(mutated(0, 'X')); });
  c.expect_error(Errc::UnsupportedVersion, "version", [&] { parse_record(mutated(4, 9)); });
  c.expect_error(Errc::ChecksumMismatch, "payload bit flip", [&] { parse_record(mutated(kRecordHeaderSize, good[kRecordHeaderSize] ^ 1)); });
  c.expect_error(Errc::ChecksumMismatch, "crc bit flip", [&] { parse_record(mutated(good.size() - 1, good.back() ^ 0x80)); });
  for (std::size_t cut : {std::size_t{0}, std::size_t{3}, kRecordHeaderSize - 1, kRecordHeaderSize + 1, good.size() - 1}) {
    c.expect_error(Errc::Truncated, "cut at " + std::to_string(cut),
                   [&] { parse_record(ByteView(good.data(), cut)); });
  }

  // Sparse pages: live data clustered in small objects, 1% of ten pages.
  Bytes sparse(10 * 65536, 0);
  std::size_t filled = 0;
  while (filled < sparse.size() / 100) {
    const std::size_t len = 16 + rng() % 49, at = rng() % (sparse.size() - len);
    for (std::size_t k = 0; k < len; ++k) sparse[at + k] = static_cast<std::uint8_t>(1 + rng() % 255);
    filled += len;
  }
  const double ratio = double(rle_encode(sparse).size()) / sparse.size();
  const double zero_ratio = double(rle_encode(Bytes(65536, 0)).size()) / 65536;
  c.expect(ratio < 0.05, "sparse ratio " + std::to_string(ratio));
  c.expect(zero_ratio < 0.05, "zero page ratio " + std::to_string(zero_ratio));
  std::ostringstream s;
  s << ok << "/10000 round trips, sparse ratio " << ratio * 100 << "%, zero page " << zero_ratio * 100 << "%";
  c.summary = s.str();
}

// ---- attestation counts -------------------------------------------------------

std::uint64_t attestations(const Bytes& module, Policy p) {
  AttesterConfig cfg;
  cfg.module_bytes = instrument(module, p).wasm;
  cfg.session_id = SessionId{};
  cfg.guest.args = {"kernel"};
  // Only counts matter here; skip storing the records.
  CallbackSink sink([](const SnapshotRecord&, ByteView) {});
  return run_attested(cfg, sink).snapshots_emitted;
}

void attestation_counts(Check& c) {
  std::map<Policy, double> sum;
  const auto kernels = wasm_in("kernels/wasm");
  std::ostringstream s;
  for (const auto& k : kernels) {
    const Bytes in = read_file(k.string());
    std::uint64_t n[3];
    for (int i = 0; i < 3; ++i) {
      n[i] = attestations(in, kPolicies[i]);
      sum[kPolicies[i]] += double(n[i]);
    }
    c.expect(n[0] <= n[1] && n[1] <= n[2], k.stem().string() + ": " + std::to_string(n[0]) + "/" +
                                               std::to_string(n[1]) + "/" + std::to_string(n[2]));
  }
  c.expect(kernels.size() >= 3, "fewer than 3 kernels");
  s << kernels.size() << " kernels, mean attestations import/local/memory = " << sum[Policy::ImportFunction] / kernels.size()
    << " / " << sum[Policy::LocalFunction] / kernels.size() << " / " << sum[Policy::MemoryInstruction] / kernels.size();
  c.summary = s.str();
}

// ---- overhead ablation ----------------------------------------------------------

void overhead(Check& c) {
  BenchOptions o;
  for (const auto& k : wasm_in("kernels/wasm")) o.modules.push_back(k.string());
  if (const char* r = std::getenv("LMA_ACCEPT_REPS")) o.reps = static_cast<std::uint32_t>(std::stoul(r));
  o.model = std::make_shared<nn::ModelGraph>(nn::load_model_file(fixture("models/detector.lmaw").string()));
  const BenchReport rep = run_ablation(o);
  const double gi = rep.geo_mean.at(Policy::ImportFunction), gl = rep.geo_mean.at(Policy::LocalFunction),
               gm = rep.geo_mean.at(Policy::MemoryInstruction);
  c.expect(rep.excluded.empty(), "kernels excluded from the ablation");
  c.expect(gi <= gl && gl <= gm, "geo-mean ordering violated");
  c.expect(gi <= 1.5, "import overhead above 1.5x");
  std::ostringstream s;
  s << "reps " << rep.reps << ", geo-mean overhead import/local/memory = " << gi << "x / " << gl << "x / " << gm << "x";
  c.summary = s.str();
}

// ---- inference ------------------------------------------------------------------

using nn::Layer;
using nn::Tensor;

Tensor random_tensor(std::mt19937_64& rng, std::uint32_t ch, std::uint32_t h, std::uint32_t w) {
  std::uniform_real_distribution<float> d(-1, 1);
  Tensor t(ch, h, w);
  for (auto& v : t.data) v = d(rng);
  return t;
}

void randomize_layer(std::mt19937_64& rng, Layer& l) {
  std::uniform_real_distribution<float> d(-0.5f, 0.5f);
  for (auto& v : l.weights) v = d(rng);
  for (auto& v : l.bias) v = d(rng);
}

double diff(const Tensor& a, const std::vector<double>& b) {
  if (a.data.size() != b.size()) return INFINITY;
  double m = 0;
  for (std::size_t i = 0; i < b.size(); ++i) m = std::max(m, std::abs(double(a.data[i]) - b[i]));
  return m;
}

std::vector<double> ref_conv(const Tensor& in, const Layer& l, std::uint32_t& oh, std::uint32_t& ow) {
  const int K = l.k, S = l.stride, P = l.pad;
  oh = (in.h + 2 * P - K) / S + 1;
  ow = (in.w + 2 * P - K) / S + 1;
  std::vector<double> out;
  for (std::uint32_t o = 0; o < l.out_ch; ++o)
    for (int y = 0; y < int(oh); ++y)
      for (int x = 0; x < int(ow); ++x) {
        double acc = l.bias[o];
        for (std::uint32_t i = 0; i < l.in_ch; ++i)
          for (int ky = 0; ky < K; ++ky)
            for (int kx = 0; kx < K; ++kx) {
              const int sy = y * S + ky - P, sx = x * S + kx - P;
              if (sy < 0 || sx < 0 || sy >= int(in.h) || sx >= int(in.w)) continue;
              acc += double(l.weights[((o * l.in_ch + i) * K + ky) * K + kx]) * in.at(i, sy, sx);
            }
        out.push_back(acc);
      }
  return out;
}

void inference(Check& c) {
  std::mt19937_64 rng(77);
  double worst = 0;
  for (int t = 0; t < 200; ++t) {
    // conv
    const std::uint32_t ic = 1 + rng() % 4, oc = 1 + rng() % 4, k = 1 + 2 * (rng() % 3), s = 1 + rng() % 2,
                        p = rng() % (k / 2 + 1), h = k + rng() % 12, w = k + rng() % 12;
    Layer l = Layer::conv2d(ic, oc, k, s, p);
    randomize_layer(rng, l);
    const Tensor in = random_tensor(rng, ic, h, w);
    std::uint32_t oh, ow;
    worst = std::max(worst, diff(nn::conv2d(in, l), ref_conv(in, l, oh, ow)));

    // max pool
    const std::uint32_t pk = 1 + rng() % 3, ps = 1 + rng() % 3;
    const Tensor pin = random_tensor(rng, ic, pk + rng() % 10, pk + rng() % 10);
    std::vector<double> pool;
    for (std::uint32_t ch = 0; ch < pin.c; ++ch)
      for (std::uint32_t y = 0; y + pk <= pin.h; y += ps)
        for (std::uint32_t x = 0; x + pk <= pin.w; x += ps) {
          double m = -INFINITY;
          for (std::uint32_t a = 0; a < pk; ++a)
            for (std::uint32_t b = 0; b < pk; ++b) m = std::max(m, double(pin.at(ch, y + a, x + b)));
          pool.push_back(m);
        }
    worst = std::max(worst, diff(nn::maxpool2d(pin, Layer::maxpool(pk, ps)), pool));

    // global average pool then dense
    std::vector<double> gap;
    for (std::uint32_t ch = 0; ch < in.c; ++ch) {
      double sum = 0;
      for (std::uint32_t i = 0; i < in.h * in.w; ++i) sum += in.data[ch * in.h * in.w + i];
      gap.push_back(sum / (in.h * in.w));
    }
    const Tensor g = nn::global_avg_pool(in);
    worst = std::max(worst, diff(g, gap));
    Layer d = Layer::dense(ic, oc);
    randomize_layer(rng, d);
    std::vector<double> dense;
    for (std::uint32_t j = 0; j < oc; ++j) {
      double acc = d.bias[j];
      for (std::uint32_t i = 0; i < ic; ++i) acc += double(d.weights[j * ic + i]) * g.data[i];
      dense.push_back(acc);
    }
    worst = std::max(worst, diff(nn::dense(g, d), dense));

    // residual add and relu
    const Tensor other = random_tensor(rng, ic, h, w);
    std::vector<double> res, rel;
    for (std::size_t i = 0; i < in.data.size(); ++i) {
      res.push_back(double(in.data[i]) + other.data[i]);
      rel.push_back(std::max(0.0, double(in.data[i])));
    }
    worst = std::max(worst, diff(nn::residual_add(in, other), res));
    worst = std::max(worst, diff(nn::relu(in), rel));
  }
  c.expect(worst < 1e-5, "layer error " + std::to_string(worst));

  // Softmax normalisation on wide-range logits.
  double soft = 0;
  std::uniform_real_distribution<float> wide(-50, 50);
  for (int t = 0; t < 1000; ++t) {
    Tensor x(2 + rng() % 8, 1, 1);
    for (auto& v : x.data) v = wide(rng);
    const Tensor y = nn::softmax(x);
    double sum = 0;
    for (float v : y.data) {
      sum += v;
      c.expect(v >= 0, "negative probability");
    }
    soft = std::max(soft, std::abs(sum - 1));
  }
  c.expect(soft < 1e-6, "softmax sum error " + std::to_string(soft));

  // Golden cross-check against the trainer's reference forward pass.
  const nn::ModelGraph model = nn::load_model_file(fixture("models/detector.lmaw").string());
  const Bytes images = read_file(fixture("models/golden_images.bin").string());
  const Bytes text = read_file(fixture("models/golden_logits.json").string());
  const auto j = nlohmann::json::parse(text.begin(), text.end());
  const std::uint32_t side = j["side"];
  const std::size_t count = j["count"];
  c.expect(count >= 100, "fewer than 100 golden images");
  c.expect(images.size() == count * side * side, "golden image size");
  double golden = 0;
  for (std::size_t n = 0; n < count && images.size() == count * side * side; ++n) {
    MemoryImage img{side, side, {}};
    for (std::size_t i = 0; i < std::size_t{side} * side; ++i)
      img.pixels.push_back(float(images[n * side * side + i]) / 255.0f);
    Tensor logits;
    nn::forward(model, nn::image_tensor(img), &logits);
    for (std::size_t k = 0; k < 2; ++k)
      golden = std::max(golden, std::abs(double(logits.data.at(k)) - j["logits"][n][k].get<double>()));
  }
  c.expect(golden < 1e-4, "golden logit error " + std::to_string(golden));
  std::ostringstream s;
  s << "layers max err " << worst << ", softmax " << soft << ", golden (" << count << " images) " << golden;
  c.summary = s.str();
}

// ---- verdict ------------------------------------------------------------------

struct Outcome {
  bool malicious = false;
  std::optional<std::uint64_t> trigger;
};

// Scans every window explicitly; short streams use a proportional threshold.
Outcome brute_force(const std::vector<bool>& s, std::uint32_t W, std::uint32_t T) {
  for (std::size_t end = W; end <= s.size(); ++end) {
    std::uint32_t n = 0;
    for (std::size_t i = end - W; i < end; ++i) n += s[i];
    if (n >= T) return {true, end - 1};
  }
  if (!s.empty() && s.size() < W) {
    const std::uint64_t n = std::count(s.begin(), s.end(), true);
    if (n * W >= std::uint64_t{T} * s.size()) return {true, s.size() - 1};
  }
  return {};
}

Verdict aggregate(const std::vector<bool>& s, VerdictConfig cfg = {}) {
  VerdictAggregator a(cfg);
  for (std::size_t i = 0; i < s.size(); ++i) a.feed(i, s[i] ? nn::Label::Corrupted : nn::Label::Benign);
  return a.finalize();
}

void verdict(Check& c) {
  std::mt19937_64 rng(4242);
  std::size_t agree = 0;
  for (int t = 0; t < 10000; ++t) {
    const std::uint32_t W = 1 + rng() % 12, T = 1 + rng() % W;
    std::vector<bool> s(1 + rng() % 40);
    const unsigned p = rng() % 101;
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = rng() % 100 < p;
    const Outcome want = brute_force(s, W, T);
    const Verdict got = aggregate(s, VerdictConfig{W, T, 1});
    const bool same = (got.kind == VerdictKind::Malicious) == want.malicious && got.trigger_seq == want.trigger;
    c.expect(same, "stream " + std::to_string(t) + " disagrees with the window scan");
    agree += same;
  }

  // Latching: once malicious, any suffix keeps it malicious with the same trigger.
  for (int t = 0; t < 1000; ++t) {
    std::vector<bool> s(8 + rng() % 20);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = rng() % 3 != 0;
    const Verdict v = aggregate(s);
    if (v.kind != VerdictKind::Malicious) continue;
    for (int k = 0; k < 20; ++k) s.push_back(false);
    const Verdict after = aggregate(s);
    c.expect(after.kind == VerdictKind::Malicious && after.trigger_seq == v.trigger_seq, "latch lost");
  }
  // Monotonicity: flipping a label to Corrupted never clears a malicious verdict.
  for (int t = 0; t < 1000; ++t) {
    std::vector<bool> s(1 + rng() % 30);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = rng() % 2;
    if (aggregate(s).kind != VerdictKind::Malicious) continue;
    s[rng() % s.size()] = true;
    c.expect(aggregate(s).kind == VerdictKind::Malicious, "flip to corrupted cleared verdict");
  }
  // Noise absorption: streams with at most T-1 corrupted per window stay benign.
  std::size_t noise_checked = 0;
  for (int t = 0; t < 2000; ++t) {
    std::vector<bool> s(8 + rng() % 60, false);
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = rng() % 2;
      const std::size_t from = i >= 7 ? i - 7 : 0;
      if (std::count(s.begin() + from, s.begin() + i + 1, true) > 4) s[i] = false;
    }
    ++noise_checked;
    c.expect(aggregate(s).kind == VerdictKind::Benign, "noise triggered a verdict");
  }
  // Out-of-order sequence numbers are rejected.
  c.expect_error(Errc::OutOfOrder, "out of order", [] {
    VerdictAggregator a;
    a.feed(3, nn::Label::Benign);
    a.feed(2, nn::Label::Benign);
  });
  std::ostringstream s;
  s << agree << "/10000 streams match the window scan, " << noise_checked << " noise streams benign";
  c.summary = s.str();
}

// ---- end-to-end determinism -----------------------------------------------------

std::string pipeline_once(const std::shared_ptr<const nn::ModelGraph>& model) {
  const Bytes kernel = read_file(fixture("kernels/wasm/fnv.wasm").string());
  AttesterConfig cfg;
  cfg.module_bytes = instrument(kernel, Policy::LocalFunction).wasm;
  cfg.session_id = parse_session_id("00112233445566778899aabbccddeeff");
  cfg.max_snapshots = 40;
  cfg.guest.args = {"fnv"};
  MemorySink sink;
  run_attested(cfg, sink);
  Verifier v(model);
  return to_json(v.verify_bytes(sink.bytes()));
}

void determinism(Check& c) {
  auto model = std::make_shared<nn::ModelGraph>(nn::load_model_file(fixture("models/detector.lmaw").string()));
  const std::string a = pipeline_once(model);
  const std::string b = pipeline_once(model);
  c.expect(a == b, "reports differ between runs");
  const auto j = nlohmann::json::parse(a);
  const std::uint64_t snaps = j["sessions"].size() == 1 ? j["sessions"][0]["snapshots"].get<std::uint64_t>() : 0;
  c.expect(snaps > 0, "report covers no snapshots");
  std::ostringstream s;
  s << "fnv kernel, local policy: two " << a.size() << "-byte reports over " << snaps << " snapshots are "
    << (a == b ? "identical" : "different");
  c.summary = s.str();
}

// ---- detection --------------------------------------------------------------------

void detection(Check& c) {
  const fs::path work = fs::temp_directory_path() / ("lma-accept-" + std::to_string(::getpid()));
  fs::remove_all(work);
  fs::create_directories(work);
  const fs::path module = work / "framegen.lma.wasm";
  write_file(module.string(), instrument(read_file(fixture("workload/framegen.wasm").string()), Policy::ImportFunction).wasm);

  GenerateOptions g;
  g.module_path = module.string();
  g.out_dir = (work / "data").string();
  g.seed = 7;
  g.corpus_dir = prepare_corpus(fixture("workload/corpus").string(), g.out_dir, 42, g.seed);
  const DatasetManifest man = generate(g);

  auto model = std::make_shared<nn::ModelGraph>(nn::load_model_file(fixture("models/detector.lmaw").string()));
  auto backend = nn::BackendRegistry::global().create("builtin", model);
  const EvalReport rep = evaluate(man, g.out_dir, *backend, VerdictConfig{}, Split::Test);
  fs::remove_all(work);

  const Confusion& v = rep.verdict;
  const std::uint64_t positives = v.tp + v.fn, negatives = v.tn + v.fp;
  c.expect(rep.executions >= 100, "only " + std::to_string(rep.executions) + " test executions");
  c.expect(positives == negatives, "test split is not balanced");
  c.expect(v.accuracy() >= 0.95, "verdict accuracy below 95%");
  std::ostringstream s;
  s << rep.executions << " test executions (" << positives << " corrupted, " << negatives
    << " benign), verdict accuracy " << v.accuracy() * 100 << "% (tp " << v.tp << " fp " << v.fp << " tn " << v.tn
    << " fn " << v.fn << "), snapshot accuracy " << rep.snapshot.accuracy() * 100 << "%";
  c.summary = s.str();
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Check&)>>> criteria = {
      {"instrumentation-validity", instrumentation},
      {"codec", codec},
      {"attestation-counts", attestation_counts},
      {"overhead-ablation", overhead},
      {"inference-correctness", inference},
      {"verdict-aggregation", verdict},
      {"end-to-end-determinism", determinism},
      {"detection", detection},
  };
  std::string only = std::getenv("LMA_ACCEPT_ONLY") ? std::getenv("LMA_ACCEPT_ONLY") : "";
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && ("," + only + ",").find("," + name + ",") == std::string::npos) continue;
    Check c;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      fn(c);
    } catch (const std::exception& e) {
      c.expect(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool pass = c.failures.empty();
    failed += !pass;
    std::printf("%s %s (%.1fs): %s\n", pass ? "PASS" : "FAIL", name.c_str(), secs, c.summary.c_str());
    for (const auto& f : c.failures) std::printf("    %s\n", f.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
