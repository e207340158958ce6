#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "lma/attester.hpp"
#include "lma/instrument.hpp"
#include "lma/nn.hpp"
#include "lma/verdict.hpp"

namespace lma {

double median(std::vector<double> v);
/// exp(mean(ln x)); throws InvalidArgument on empty input or non-positive values.
double geo_mean(std::span<const double> ratios);

struct BenchOptions {
  std::vector<std::string> modules;  // uninstrumented .wasm paths
  std::vector<Policy> policies{Policy::ImportFunction, Policy::LocalFunction, Policy::MemoryInstruction};
  std::uint32_t reps = 25;
  std::shared_ptr<const nn::ModelGraph> model;
  std::string model_name = "small-resnet";
  std::string backend = "builtin";
  /// Classify every snapshot inside the hook, as an in-process verifier would.
  bool verify_inline = true;
  VerdictConfig verdict;
  GuestOptions guest;
  std::function<void(const std::string&)> log;
};

struct BenchCell {
  std::string module;
  Policy policy = Policy::ImportFunction;
  std::uint64_t sites = 0;
  std::uint64_t attestations = 0;  // snapshots per run
  bool attestations_stable = true;
  double baseline_median_s = 0;
  double instrumented_median_s = 0;
  double ratio = 0;
};

struct BenchReport {
  std::string backend;
  std::string model;
  std::uint32_t reps = 0;
  std::vector<BenchCell> cells;
  std::map<Policy, double> geo_mean;
  std::map<Policy, double> avg_attestations;
  std::vector<std::string> excluded;

  std::string to_json() const;
};

/// Runs each module uninstrumented and under each policy, interleaving
/// configurations within every repetition. Modules whose baseline traps or
/// exits nonzero are excluded (BaselineFailure is logged, not thrown).
BenchReport run_ablation(const BenchOptions& options);

}  // namespace lma
