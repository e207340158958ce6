#include "lma/verdict.hpp"

#include <string>

#include "lma/error.hpp"

namespace lma {

void VerdictConfig::check() const {
  if (window < 1 || threshold < 1 || threshold > window)
    throw Error(Errc::InvalidConfig, "need 1 <= threshold <= window (threshold " + std::to_string(threshold) +
                                         ", window " + std::to_string(window) + ")");
  if (min_snapshots < 1) throw Error(Errc::InvalidConfig, "min_snapshots must be at least 1");
}

const char* verdict_name(VerdictKind v) noexcept { return v == VerdictKind::Malicious ? "Malicious" : "Benign"; }

std::uint32_t proportional_threshold(const VerdictConfig& cfg, std::uint64_t n) {
  return static_cast<std::uint32_t>((std::uint64_t{cfg.threshold} * n + cfg.window - 1) / cfg.window);
}

VerdictAggregator::VerdictAggregator(VerdictConfig cfg) : cfg_(cfg) { cfg_.check(); }

InterimStatus VerdictAggregator::feed(std::uint64_t seq, nn::Label label) {
  if (last_seq_ && seq <= *last_seq_)
    throw Error(Errc::OutOfOrder, "seq " + std::to_string(seq) + " after " + std::to_string(*last_seq_));
  last_seq_ = seq;
  ++fed_;
  const bool corrupted = label == nn::Label::Corrupted;
  window_.push_back(corrupted);
  corrupted_in_window_ += corrupted;
  if (window_.size() > cfg_.window) {
    corrupted_in_window_ -= window_.front();
    window_.pop_front();
  }
  if (window_.size() == cfg_.window) {
    ++evaluated_;
    if (!trigger_ && corrupted_in_window_ >= cfg_.threshold) trigger_ = seq;
  }
  return {trigger_.has_value(), trigger_};
}

Verdict VerdictAggregator::finalize() const {
  if (fed_ < cfg_.min_snapshots)
    throw Error(Errc::InsufficientData,
                std::to_string(fed_) + " snapshots, need " + std::to_string(cfg_.min_snapshots));
  Verdict v;
  v.windows_evaluated = evaluated_;
  v.trigger_seq = trigger_;
  if (fed_ < cfg_.window) {
    v.windows_evaluated = 1;
    if (corrupted_in_window_ >= proportional_threshold(cfg_, fed_)) v.trigger_seq = last_seq_;
  }
  v.kind = v.trigger_seq ? VerdictKind::Malicious : VerdictKind::Benign;
  return v;
}

}  // namespace lma
