// lma: instrument, attest, verify, classify, render, dataset, mutate, bench, eval.
#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <nlohmann/json.hpp>

#include "lma/attester.hpp"
#include "lma/bench.hpp"
#include "lma/codec.hpp"
#include "lma/config.hpp"
#include "lma/dataset.hpp"
#include "lma/error.hpp"
#include "lma/eval.hpp"
#include "lma/image.hpp"
#include "lma/instrument.hpp"
#include "lma/nn.hpp"
#include "lma/verifier.hpp"

namespace fs = std::filesystem;
using namespace lma;

namespace {

constexpr int kExitError = 1;

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text << "\n";
  } else {
    write_file(path, Bytes(text.begin(), text.end()));
  }
}

std::shared_ptr<const nn::ModelGraph> load_model_or_throw(const std::string& path) {
  try {
    return std::make_shared<const nn::ModelGraph>(nn::load_model_file(path));
  } catch (const Error& e) {
    throw Error(Errc::ModelLoadError, path + ": " + e.what());
  }
}

void add_verdict_flags(CLI::App* sub, VerdictConfig& v) {
  sub->add_option("--window", v.window, "Sliding window size")->capture_default_str();
  sub->add_option("--threshold", v.threshold, "Corrupted snapshots per window that flag an execution")->capture_default_str();
  sub->add_option("--min-snapshots", v.min_snapshots, "Snapshots required for a verdict")->capture_default_str();
}

std::string created_timestamp() {
  std::time_t t = std::time(nullptr);
  if (const char* e = std::getenv("SOURCE_DATE_EPOCH")) t = static_cast<std::time_t>(std::strtoll(e, nullptr, 10));
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

// Moves `--config FILE` settings in front of the subcommand's own arguments,
// so flags given on the command line still win (options take the last value).
std::vector<std::string> expand_config(CLI::App& app, std::vector<std::string> args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i + 2));
      break;
    }
    if (args[i].starts_with("--config=")) {
      path = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
  }
  if (path.empty()) return args;
  std::size_t sub_pos = args.size();
  CLI::App* sub = nullptr;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (auto* s = app.get_subcommand_no_throw(args[i])) {
      sub = s;
      sub_pos = i;
      break;
    }
  }
  if (!sub) throw Error(Errc::InvalidArgument, "--config needs a subcommand");
  std::vector<std::string> injected;
  for (const auto& [key, value] : load_config(path)) {
    const CLI::Option* opt = sub->get_option_no_throw("--" + key);
    if (!opt) throw Error(Errc::InvalidArgument, "config key '" + key + "' is not an option of '" + sub->get_name() + "'");
    if (opt->get_expected_min() == 0) {
      if (value == "true" || value == "1") injected.push_back("--" + key);
      else if (value != "false" && value != "0") throw Error(Errc::InvalidArgument, "config key '" + key + "' is a flag; use true or false");
    } else {
      injected.push_back("--" + key);
      injected.push_back(value);
    }
  }
  args.insert(args.begin() + static_cast<std::ptrdiff_t>(sub_pos + 1), injected.begin(), injected.end());
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Linear-memory attestation toolkit for WebAssembly", "lma"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");
  app.footer("Any subcommand accepts --config FILE with `key = value` lines naming its long options.");
  int exit_code = 0;

  // instrument
  std::string ins_policy = "import", ins_in, ins_out, ins_report;
  bool ins_bulk = false;
  auto* ins = app.add_subcommand("instrument", "Insert snapshot hooks into a Wasm module");
  ins->add_option("--policy", ins_policy, "import | local | memory")->check(CLI::IsMember({"import", "local", "memory"}))->capture_default_str();
  ins->add_option("--in", ins_in, "Input module")->required()->check(CLI::ExistingFile);
  ins->add_option("--out", ins_out, "Output module")->required();
  ins->add_option("--report", ins_report, "Write the instrumentation report JSON here (default: stdout)");
  ins->add_flag("--hook-bulk-memory", ins_bulk, "Also hook memory.fill/copy/init under the memory policy");
  ins->callback([&] {
    InstrumentOptions o;
    o.hook_bulk_memory = ins_bulk;
    auto res = instrument(read_file(ins_in), parse_policy(ins_policy), o);
    write_file(ins_out, res.wasm);
    write_text(ins_report, to_json(res.report));
  });

  // attest
  std::string at_module, at_sink, at_session, at_stdin, at_guest_out = "stderr";
  std::uint64_t at_max = 0;
  std::vector<std::string> at_args;
  auto* at = app.add_subcommand("attest", "Run an instrumented module and emit snapshot records");
  at->add_option("--module", at_module, "Instrumented module")->required()->check(CLI::ExistingFile);
  at->add_option("--sink", at_sink, "file:PATH or tcp:HOST:PORT")->required();
  at->add_option("--max-snapshots", at_max, "Stop emitting after N snapshots (0 = unlimited)")->capture_default_str();
  at->add_option("--session-id", at_session, "32 hex digits (default: random)");
  at->add_option("--stdin", at_stdin, "File supplied as guest stdin")->check(CLI::ExistingFile);
  at->add_option("--guest-stdout", at_guest_out, "Where guest stdout goes: stderr, none or a file path")->capture_default_str();
  at->add_option("guest-args", at_args, "Guest arguments (after --)");
  at->callback([&] {
    AttesterConfig cfg;
    cfg.module_path = at_module;
    cfg.sink = parse_sink(at_sink);
    cfg.max_snapshots = at_max;
    if (!at_session.empty()) cfg.session_id = parse_session_id(at_session);
    if (!at_stdin.empty()) cfg.guest.stdin_data = read_file(at_stdin);
    cfg.guest.args = {fs::path(at_module).filename().string()};
    cfg.guest.args.insert(cfg.guest.args.end(), at_args.begin(), at_args.end());
    std::FILE* out_file = nullptr;
    if (at_guest_out == "stderr") cfg.guest.forward_stdout = stderr;
    else if (at_guest_out != "none") {
      out_file = std::fopen(at_guest_out.c_str(), "wb");
      if (!out_file) throw Error(Errc::Io, "cannot open " + at_guest_out);
      cfg.guest.forward_stdout = out_file;
    }
    cfg.guest.forward_stderr = stderr;
    RunSummary s;
    try {
      s = run_attested(cfg);
    } catch (...) {
      if (out_file) std::fclose(out_file);
      throw;
    }
    if (out_file) std::fclose(out_file);
    std::cout << to_json(s) << "\n";
  });

  // verify
  std::string vf_source, vf_model, vf_report, vf_backend = "builtin";
  bool vf_timings = false;
  std::size_t vf_max_conn = 0;
  VerifierOptions vf_opts;
  auto* vf = app.add_subcommand("verify", "Classify snapshot streams and aggregate per-session verdicts");
  vf->add_option("--source", vf_source, "file:PATH or listen:PORT")->required();
  vf->add_option("--model", vf_model, "Weight file (.lmaw)")->required();
  vf->add_option("--report", vf_report, "Write the JSON report here (default: stdout)");
  vf->add_option("--backend", vf_backend, "Inference backend")->capture_default_str();
  vf->add_flag("--timings", vf_timings, "Include per-stage timings in the report");
  vf->add_option("--max-connections", vf_max_conn, "listen: stop after N connections (0 = run forever)")->capture_default_str();
  add_verdict_flags(vf, vf_opts.verdict);
  vf->callback([&] {
    vf_opts.backend = vf_backend;
    vf_opts.on_malicious = [](const SessionId& id, std::uint64_t seq) {
      std::fprintf(stderr, "MALICIOUS session %s at seq %llu\n", session_hex(id).c_str(), static_cast<unsigned long long>(seq));
    };
    Verifier v(load_model_or_throw(vf_model), vf_opts);
    std::vector<SessionReport> reports;
    if (vf_source.starts_with("file:")) {
      reports = v.verify_file(vf_source.substr(5));
    } else if (vf_source.starts_with("listen:")) {
      int port = std::stoi(vf_source.substr(7));
      if (port < 0 || port > 65535) throw Error(Errc::InvalidArgument, "bad port");
      reports = v.listen(static_cast<std::uint16_t>(port), vf_max_conn,
                         [](std::uint16_t p) { std::fprintf(stderr, "listening on port %u\n", p); });
    } else {
      throw Error(Errc::InvalidArgument, "source must be file:PATH or listen:PORT");
    }
    write_text(vf_report, to_json(reports, vf_timings));
    exit_code = exit_code_for(reports);
  });

  // classify
  std::string cl_model, cl_snapshot;
  std::optional<std::uint64_t> cl_index;
  auto* cl = app.add_subcommand("classify", "Print per-snapshot classifications as JSON lines");
  cl->add_option("--model", cl_model, "Weight file (.lmaw)")->required();
  cl->add_option("--snapshot", cl_snapshot, "Snapshot stream (.lmas)")->required()->check(CLI::ExistingFile);
  cl->add_option("--index", cl_index, "Only this record");
  cl->callback([&] {
    auto model = load_model_or_throw(cl_model);
    auto recs = parse_stream(read_file(cl_snapshot));
    for (std::size_t i = 0; i < recs.size(); ++i) {
      if (cl_index && *cl_index != i) continue;
      auto c = nn::infer(*model, to_image(record_memory(recs[i])));
      nlohmann::ordered_json j{{"index", i},
                               {"session_id", session_hex(recs[i].session_id)},
                               {"seq", recs[i].seq_no},
                               {"label", nn::label_name(c.label)},
                               {"score", c.score}};
      std::cout << j.dump() << "\n";
    }
    if (cl_index && *cl_index >= recs.size()) throw Error(Errc::InvalidArgument, "no record " + std::to_string(*cl_index));
  });

  // render
  std::string rd_snapshot, rd_out;
  std::uint64_t rd_index = 0;
  std::uint32_t rd_side = kDefaultSide;
  auto* rd = app.add_subcommand("render", "Write one snapshot as a binary PGM image");
  rd->add_option("--snapshot", rd_snapshot, "Snapshot stream (.lmas)")->required()->check(CLI::ExistingFile);
  rd->add_option("--index", rd_index, "Record index")->capture_default_str();
  rd->add_option("--out", rd_out, "Output .pgm")->required();
  rd->add_option("--side", rd_side, "Image side in pixels")->capture_default_str()->check(CLI::PositiveNumber);
  rd->callback([&] {
    auto recs = parse_stream(read_file(rd_snapshot));
    if (rd_index >= recs.size()) throw Error(Errc::InvalidArgument, "no record " + std::to_string(rd_index));
    write_file(rd_out, to_pgm(to_image(record_memory(recs[rd_index]), rd_side)));
  });

  // dataset
  GenerateOptions ds;
  std::uint32_t ds_mutate = 0;
  auto* dsc = app.add_subcommand("dataset", "Generate a labeled snapshot dataset");
  dsc->add_option("--module", ds.module_path, "Instrumented module")->required()->check(CLI::ExistingFile);
  dsc->add_option("--corpus", ds.corpus_dir, "Directory of stdin inputs")->required()->check(CLI::ExistingDirectory);
  dsc->add_option("--out", ds.out_dir, "Output directory")->required();
  dsc->add_option("--seed", ds.seed, "Seed")->capture_default_str();
  dsc->add_option("--corrupt-ratio", ds.n_corrupt_per_benign, "Corrupted variants per benign execution")->capture_default_str();
  dsc->add_option("--max-snapshots", ds.max_snapshots, "Snapshot cap per run (0 = unlimited)")->capture_default_str();
  dsc->add_option("--mutate-rounds", ds_mutate, "Extend the corpus with N rounds of mutated inputs first")->capture_default_str();
  dsc->callback([&] {
    ds.created = created_timestamp();
    ds.log = [](const std::string& m) { std::fprintf(stderr, "%s\n", m.c_str()); };
    if (ds_mutate) ds.corpus_dir = prepare_corpus(ds.corpus_dir, ds.out_dir, ds_mutate, ds.seed);
    auto man = generate(ds);
    std::size_t corrupted = 0;
    for (const auto& e : man.entries) corrupted += e.label == nn::Label::Corrupted;
    nlohmann::ordered_json j{{"manifest", (fs::path(ds.out_dir) / "manifest.json").string()},
                             {"entries", man.entries.size()},
                             {"corrupted", corrupted}};
    std::cout << j.dump(2) << "\n";
  });

  // mutate
  std::string mu_corpus, mu_out;
  std::uint32_t mu_rounds = 1;
  std::uint64_t mu_seed = 7;
  auto* mu = app.add_subcommand("mutate", "Write byte-level mutations of a corpus");
  mu->add_option("--corpus", mu_corpus, "Seed corpus directory")->required()->check(CLI::ExistingDirectory);
  mu->add_option("--out", mu_out, "Output directory")->required();
  mu->add_option("--rounds", mu_rounds, "Mutants per seed input")->capture_default_str();
  mu->add_option("--seed", mu_seed, "Seed")->capture_default_str();
  mu->callback([&] {
    auto ids = mutate_corpus_dir(mu_corpus, mu_out, mu_rounds, mu_seed);
    std::cout << nlohmann::json{{"written", ids.size()}}.dump() << "\n";
  });

  // bench
  std::string bn_modules, bn_policies = "import,local,memory", bn_model, bn_report, bn_backend = "builtin";
  std::uint32_t bn_reps = 25;
  VerdictConfig bn_verdict;
  auto* bn = app.add_subcommand("bench", "Overhead ablation across instrumentation policies");
  bn->add_option("--modules", bn_modules, "Directory of uninstrumented .wasm kernels")->required()->check(CLI::ExistingDirectory);
  bn->add_option("--policies", bn_policies, "Comma-separated policies")->capture_default_str();
  bn->add_option("--reps", bn_reps, "Repetitions per configuration (>= 3)")->capture_default_str();
  bn->add_option("--model", bn_model, "Weight file (.lmaw)")->required();
  bn->add_option("--backend", bn_backend, "Inference backend")->capture_default_str();
  bn->add_option("--report", bn_report, "Write the JSON report here (default: stdout)");
  add_verdict_flags(bn, bn_verdict);
  bn->callback([&] {
    BenchOptions o;
    for (const auto& e : fs::directory_iterator(bn_modules))
      if (e.path().extension() == ".wasm") o.modules.push_back(e.path().string());
    std::sort(o.modules.begin(), o.modules.end());
    o.policies.clear();
    std::stringstream ss(bn_policies);
    for (std::string p; std::getline(ss, p, ',');) o.policies.push_back(parse_policy(p));
    o.reps = bn_reps;
    o.model = load_model_or_throw(bn_model);
    o.model_name = fs::path(bn_model).stem().string();
    o.backend = bn_backend;
    o.verdict = bn_verdict;
    o.log = [](const std::string& m) { std::fprintf(stderr, "%s\n", m.c_str()); };
    write_text(bn_report, run_ablation(o).to_json());
  });

  // eval
  std::string ev_manifest, ev_model, ev_report, ev_split = "test", ev_backend = "builtin";
  VerdictConfig ev_verdict;
  auto* ev = app.add_subcommand("eval", "Snapshot- and verdict-level metrics on a manifest split");
  ev->add_option("--manifest", ev_manifest, "manifest.json")->required()->check(CLI::ExistingFile);
  ev->add_option("--model", ev_model, "Weight file (.lmaw)")->required();
  ev->add_option("--split", ev_split, "train | val | test")->check(CLI::IsMember({"train", "val", "test"}))->capture_default_str();
  ev->add_option("--backend", ev_backend, "Inference backend")->capture_default_str();
  ev->add_option("--report", ev_report, "Write the JSON report here (default: stdout)");
  add_verdict_flags(ev, ev_verdict);
  ev->callback([&] {
    ev_verdict.check();
    auto model = load_model_or_throw(ev_model);
    auto backend = nn::BackendRegistry::global().create(ev_backend, model);
    auto man = load_manifest(ev_manifest);
    auto rep = evaluate(man, fs::path(ev_manifest).parent_path().string(), *backend, ev_verdict, parse_split(ev_split));
    write_text(ev_report, rep.to_json());
  });

  // init-model
  std::string im_out;
  std::uint64_t im_seed = 1;
  auto* im = app.add_subcommand("init-model", "Write a small-resnet weight file with random parameters");
  im->add_option("--out", im_out, "Output .lmaw")->required();
  im->add_option("--seed", im_seed, "Seed")->capture_default_str();
  im->callback([&] {
    auto layers = nn::small_resnet_layers();
    nn::randomize(layers, im_seed);
    write_file(im_out, nn::save_model(nn::ModelGraph(std::move(layers))));
  });

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = expand_config(app, std::move(args));
    std::reverse(args.begin(), args.end());  // CLI11 consumes a reversed vector
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitError;
  } catch (const Error& e) {
    std::fprintf(stderr, "lma: %s\n", e.what());
    return kExitError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "lma: %s\n", e.what());
    return kExitError;
  }
  return exit_code;
}
