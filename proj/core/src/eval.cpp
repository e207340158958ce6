#include "lma/eval.hpp"

#include <algorithm>
#include <filesystem>
#include <nlohmann/json.hpp>

#include "lma/codec.hpp"
#include "lma/error.hpp"
#include "lma/image.hpp"

namespace lma {

void Confusion::add(bool actual, bool predicted) {
  if (actual && predicted) ++tp;
  else if (!actual && predicted) ++fp;
  else if (!actual) ++tn;
  else ++fn;
}

namespace {
double ratio(std::uint64_t a, std::uint64_t b) { return b ? static_cast<double>(a) / static_cast<double>(b) : 0.0; }
}  // namespace

double Confusion::accuracy() const noexcept { return ratio(tp + tn, total()); }
double Confusion::precision() const noexcept { return ratio(tp, tp + fp); }
double Confusion::recall() const noexcept { return ratio(tp, tp + fn); }
double Confusion::f1() const noexcept { return ratio(2 * tp, 2 * tp + fp + fn); }

EvalReport evaluate_scores(std::vector<ScoredSnapshot> scored, const VerdictConfig& cfg) {
  std::stable_sort(scored.begin(), scored.end(), [](const ScoredSnapshot& a, const ScoredSnapshot& b) {
    return std::tie(a.source_program, a.input_id, a.record_index) < std::tie(b.source_program, b.input_id, b.record_index);
  });
  EvalReport rep;
  for (std::size_t i = 0; i < scored.size();) {
    std::size_t j = i;
    VerdictAggregator agg(cfg);
    bool truth = false;
    while (j < scored.size() && scored[j].source_program == scored[i].source_program && scored[j].input_id == scored[i].input_id) {
      const auto& s = scored[j];
      rep.snapshot.add(s.truth == nn::Label::Corrupted, s.predicted.label == nn::Label::Corrupted);
      truth |= s.truth == nn::Label::Corrupted;
      agg.feed(s.record_index, s.predicted.label);
      ++j;
    }
    bool predicted = false;
    try {
      predicted = agg.finalize().kind == VerdictKind::Malicious;
    } catch (const Error& e) {
      if (e.code() != Errc::InsufficientData) throw;
      ++rep.insufficient;
    }
    rep.verdict.add(truth, predicted);
    rep.verdict_per_program[scored[i].source_program].add(truth, predicted);
    ++rep.executions;
    i = j;
  }
  return rep;
}

EvalReport evaluate(const DatasetManifest& manifest, const std::string& manifest_dir, const nn::Backend& backend,
                    const VerdictConfig& cfg, Split split) {
  std::map<std::string, std::vector<SnapshotRecord>> files;
  std::vector<ScoredSnapshot> scored;
  for (const auto& e : manifest.entries) {
    if (e.split != split) continue;
    auto it = files.find(e.snapshot_file);
    if (it == files.end())
      it = files.emplace(e.snapshot_file,
                         parse_stream(read_file((std::filesystem::path(manifest_dir) / e.snapshot_file).string())))
               .first;
    if (e.record_index >= it->second.size())
      throw Error(Errc::InvalidArgument, e.snapshot_file + " has no record " + std::to_string(e.record_index));
    const auto& rec = it->second[e.record_index];
    ScoredSnapshot s;
    s.source_program = e.source_program;
    s.input_id = e.input_id;
    s.record_index = e.record_index;
    s.truth = e.label;
    s.predicted = backend.classify(to_image(record_memory(rec)));
    scored.push_back(std::move(s));
  }
  if (scored.empty()) throw Error(Errc::EmptySplit, std::string("manifest has no ") + split_name(split) + " entries");
  return evaluate_scores(std::move(scored), cfg);
}

namespace {
nlohmann::ordered_json confusion_json(const Confusion& c) {
  return {{"tp", c.tp},
          {"fp", c.fp},
          {"tn", c.tn},
          {"fn", c.fn},
          {"accuracy", c.accuracy()},
          {"precision", c.precision()},
          {"recall", c.recall()},
          {"f1", c.f1()}};
}
}  // namespace

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["executions"] = executions;
  j["insufficient_data"] = insufficient;
  j["snapshot_level"] = confusion_json(snapshot);
  j["verdict_level"] = confusion_json(verdict);
  nlohmann::ordered_json per;
  for (const auto& [k, v] : verdict_per_program) per[k] = confusion_json(v);
  j["verdict_level_per_program"] = per;
  return j.dump(2);
}

}  // namespace lma
