#include "lma/bench.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <nlohmann/json.hpp>

#include "lma/error.hpp"
#include "lma/verifier.hpp"
#include "lma/wasm/validator.hpp"

namespace lma {

double median(std::vector<double> v) {
  if (v.empty()) throw Error(Errc::InvalidArgument, "median of empty set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double geo_mean(std::span<const double> ratios) {
  if (ratios.empty()) throw Error(Errc::InvalidArgument, "geometric mean of empty set");
  double s = 0;
  for (double r : ratios) {
    if (!(r > 0)) throw Error(Errc::InvalidArgument, "geometric mean needs positive values");
    s += std::log(r);
  }
  return std::exp(s / static_cast<double>(ratios.size()));
}

namespace {

struct Variant {
  Policy policy;
  wasm::Module module;
  std::uint64_t sites;
  std::vector<double> times;
  std::vector<std::uint64_t> counts;
};

}  // namespace

BenchReport run_ablation(const BenchOptions& opt) {
  if (opt.reps < 3) throw Error(Errc::InvalidArgument, "bench needs at least 3 repetitions");
  if (!opt.model) throw Error(Errc::InvalidArgument, "bench needs a model");
  auto backend = nn::BackendRegistry::global().create(opt.backend, opt.model);
  VerifierOptions vopt;
  vopt.verdict = opt.verdict;

  BenchReport rep;
  rep.backend = opt.backend;
  rep.model = opt.model_name;
  rep.reps = opt.reps;
  auto log = [&](const std::string& s) {
    if (opt.log) opt.log(s);
  };

  for (const auto& path : opt.modules) {
    const std::string name = std::filesystem::path(path).stem().string();
    wasm::Module base;
    std::vector<Variant> variants;
    try {
      Bytes bytes = read_file(path);
      base = wasm::decode_and_validate(bytes);
      for (Policy p : opt.policies) {
        auto ins = instrument(bytes, p);
        variants.push_back({p, wasm::decode(ins.wasm), ins.report.sites_instrumented, {}, {}});
      }
    } catch (const Error& e) {
      log(std::string("BaselineFailure: ") + name + ": " + e.what());
      rep.excluded.push_back(name);
      continue;
    }

    std::vector<double> base_times;
    bool failed = false;
    for (std::uint32_t r = 0; r < opt.reps && !failed; ++r) {
      GuestResult g = run_guest(base, opt.guest);
      if (g.trap || g.exit_code != 0) {
        log("BaselineFailure: " + name + ": " + (g.trap ? "trap " + *g.trap : "exit code " + std::to_string(g.exit_code)));
        failed = true;
        break;
      }
      base_times.push_back(g.wall_time_s);
      for (auto& v : variants) {
        SessionVerifier session(SessionId{}, *backend, vopt);
        CallbackSink sink([&](const SnapshotRecord& rec, ByteView) {
          if (opt.verify_inline) session.add(rec);
        });
        AttesterConfig cfg;
        cfg.session_id = SessionId{};
        cfg.guest = opt.guest;
        RunSummary s = run_attested(v.module, cfg, sink);
        session.finish();
        v.times.push_back(s.wall_time_s);
        v.counts.push_back(s.snapshots_emitted);
      }
    }
    if (failed) {
      rep.excluded.push_back(name);
      continue;
    }
    const double bmed = median(base_times);
    for (auto& v : variants) {
      BenchCell c;
      c.module = name;
      c.policy = v.policy;
      c.sites = v.sites;
      c.attestations = v.counts.front();
      c.attestations_stable = std::all_of(v.counts.begin(), v.counts.end(), [&](auto x) { return x == v.counts.front(); });
      c.baseline_median_s = bmed;
      c.instrumented_median_s = median(v.times);
      c.ratio = c.instrumented_median_s / bmed;
      log(name + " " + policy_name(v.policy) + ": ratio " + std::to_string(c.ratio) + ", attestations " +
          std::to_string(c.attestations));
      rep.cells.push_back(c);
    }
  }
  for (Policy p : opt.policies) {
    std::vector<double> ratios;
    double att = 0;
    for (const auto& c : rep.cells)
      if (c.policy == p) {
        ratios.push_back(c.ratio);
        att += static_cast<double>(c.attestations);
      }
    if (ratios.empty()) continue;
    rep.geo_mean[p] = geo_mean(ratios);
    rep.avg_attestations[p] = att / static_cast<double>(ratios.size());
  }
  return rep;
}

std::string BenchReport::to_json() const {
  using J = nlohmann::ordered_json;
  J j;
  j["reps"] = reps;
  J table = J::array();
  for (const auto& [p, g] : geo_mean)
    table.push_back(J{{"backend", backend}, {"model", model}, {"instr", policy_name(p)}, {"g_mean", g}, {"avg_att", avg_attestations.at(p)}});
  j["table"] = std::move(table);
  J cells_j = J::array();
  for (const auto& c : cells)
    cells_j.push_back(J{{"module", c.module},
                        {"policy", policy_name(c.policy)},
                        {"sites", c.sites},
                        {"attestations", c.attestations},
                        {"attestations_stable", c.attestations_stable},
                        {"baseline_median_s", c.baseline_median_s},
                        {"instrumented_median_s", c.instrumented_median_s},
                        {"ratio", c.ratio}});
  j["cells"] = std::move(cells_j);
  j["excluded"] = excluded;
  return j.dump(2);
}

}  // namespace lma
