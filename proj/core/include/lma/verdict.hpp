#pragma once

#include <cstdint>
#include <deque>
#include <optional>

#include "lma/nn.hpp"

namespace lma {

struct VerdictConfig {
  std::uint32_t window = 8;
  std::uint32_t threshold = 5;
  std::uint32_t min_snapshots = 1;
  /// Throws InvalidConfig unless 1 <= threshold <= window and min_snapshots >= 1.
  void check() const;
};

enum class VerdictKind : std::uint8_t { Benign, Malicious };
const char* verdict_name(VerdictKind v) noexcept;

struct Verdict {
  VerdictKind kind = VerdictKind::Benign;
  std::optional<std::uint64_t> trigger_seq;
  std::uint64_t windows_evaluated = 0;
};

struct InterimStatus {
  bool malicious = false;
  std::optional<std::uint64_t> trigger_seq;
};

/// Sliding-window threshold aggregation with latching. Full windows are
/// evaluated on every feed; a stream that ends before filling one window is
/// judged as a whole at finalize() against ceil(T * n / W).
class VerdictAggregator {
 public:
  explicit VerdictAggregator(VerdictConfig cfg = {});

  /// Throws OutOfOrder when seq does not increase.
  InterimStatus feed(std::uint64_t seq, nn::Label label);
  /// Throws InsufficientData below min_snapshots.
  Verdict finalize() const;

  std::uint64_t fed() const noexcept { return fed_; }
  bool latched() const noexcept { return trigger_.has_value(); }

 private:
  VerdictConfig cfg_;
  std::deque<bool> window_;
  std::uint32_t corrupted_in_window_ = 0;
  std::uint64_t fed_ = 0;
  std::optional<std::uint64_t> last_seq_;
  std::optional<std::uint64_t> trigger_;
  std::uint64_t evaluated_ = 0;
};

/// ceil(T * n / W)
std::uint32_t proportional_threshold(const VerdictConfig& cfg, std::uint64_t n);

}  // namespace lma
