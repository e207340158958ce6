#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lma/dataset.hpp"
#include "lma/nn.hpp"
#include "lma/verdict.hpp"

namespace lma {

/// Binary confusion matrix; "positive" means Corrupted / Malicious.
struct Confusion {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;

  void add(bool actual_positive, bool predicted_positive);
  std::uint64_t total() const noexcept { return tp + fp + tn + fn; }
  double accuracy() const noexcept;
  double precision() const noexcept;  // 0 when nothing predicted positive
  double recall() const noexcept;
  double f1() const noexcept;
};

/// One classified snapshot, in execution order within its input_id.
struct ScoredSnapshot {
  std::string source_program;
  std::string input_id;
  std::uint64_t record_index = 0;
  nn::Label truth = nn::Label::Benign;
  nn::Classification predicted;
};

struct EvalReport {
  Confusion snapshot;
  Confusion verdict;
  std::map<std::string, Confusion> verdict_per_program;
  std::uint64_t executions = 0;
  std::uint64_t insufficient = 0;  // executions below min_snapshots, counted as Benign verdicts

  std::string to_json() const;
};

/// Groups by (source_program, input_id), orders by record_index and feeds
/// each execution through the verdict aggregator. An execution is
/// Malicious in truth when any of its snapshots is Corrupted.
EvalReport evaluate_scores(std::vector<ScoredSnapshot> scored, const VerdictConfig& cfg);

/// Classifies every entry of `split` (files resolved against manifest_dir).
/// Throws EmptySplit.
EvalReport evaluate(const DatasetManifest& manifest, const std::string& manifest_dir, const nn::Backend& backend,
                    const VerdictConfig& cfg, Split split = Split::Test);

}  // namespace lma
