#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lma/codec.hpp"
#include "lma/nn.hpp"
#include "lma/verdict.hpp"

namespace lma {

struct VerifierOptions {
  VerdictConfig verdict;
  std::string backend = "builtin";
  std::uint32_t image_side = kDefaultSide;
  /// Records whose declared payload exceeds this are treated as corrupt.
  std::uint64_t max_record_bytes = 1ull << 32;
  /// Called once per session when the verdict latches Malicious.
  std::function<void(const SessionId&, std::uint64_t trigger_seq)> on_malicious;
};

enum class SessionVerdict : std::uint8_t { Benign, Malicious, Invalid };
const char* session_verdict_name(SessionVerdict v) noexcept;

struct SnapshotResult {
  std::uint64_t seq = 0;
  double score = 0;
  nn::Label label = nn::Label::Benign;
};

struct StageTimings {
  double decode_s = 0;
  double image_s = 0;
  double infer_s = 0;
};

struct SessionReport {
  SessionId session_id{};
  SessionVerdict verdict = SessionVerdict::Benign;
  std::uint64_t snapshots = 0;
  std::uint64_t corrupted_count = 0;
  std::optional<std::uint64_t> first_trigger_seq;
  std::vector<SnapshotResult> per_snapshot;
  std::optional<std::string> invalid_reason;
  StageTimings timings;
};

/// decode -> image -> classify -> aggregate for one session.
class SessionVerifier {
 public:
  SessionVerifier(SessionId id, const nn::Backend& backend, const VerifierOptions& opts);

  void add(const SnapshotRecord& rec);
  void mark_invalid(const std::string& reason);
  SessionReport finish();

 private:
  const nn::Backend& backend_;
  const VerifierOptions& opts_;
  VerdictAggregator agg_;
  SessionReport rep_;
  std::uint64_t expected_seq_ = 0;
  bool announced_ = false;
};

/// Splits a byte stream into records and routes them to per-session
/// verifiers, tolerating damaged records where framing allows.
class StreamDemux {
 public:
  StreamDemux(const nn::Backend& backend, const VerifierOptions& opts);

  /// Consumes as many whole records from `buf` as possible and returns the
  /// number of bytes used. Stops consuming after an unrecoverable error.
  std::size_t feed(ByteView buf);
  /// Ends the stream; `leftover` bytes are an incomplete trailing record.
  std::vector<SessionReport> finish(std::size_t leftover);
  bool failed() const noexcept { return failed_; }

 private:
  SessionVerifier& session(const SessionId& id);
  void invalidate_current(const std::optional<SessionId>& id, const std::string& why);

  const nn::Backend& backend_;
  const VerifierOptions& opts_;
  std::map<SessionId, std::unique_ptr<SessionVerifier>> sessions_;
  std::vector<SessionId> order_;
  std::optional<SessionId> last_;
  bool failed_ = false;
};

class Verifier {
 public:
  /// Throws BackendUnavailable for an unknown backend name.
  Verifier(std::shared_ptr<const nn::ModelGraph> model, VerifierOptions opts = {});

  /// Reports come in order of each session's first record.
  std::vector<SessionReport> verify_bytes(ByteView stream) const;
  /// Throws SourceUnavailable when the file cannot be read.
  std::vector<SessionReport> verify_file(const std::string& path) const;
  /// Serves TCP connections on `port` (0 picks one; `on_listening` receives
  /// it), one session stream per connection, until `max_connections` have
  /// closed (0 = forever). Reports are sorted by session id.
  std::vector<SessionReport> listen(std::uint16_t port, std::size_t max_connections,
                                    const std::function<void(std::uint16_t)>& on_listening = {},
                                    const std::function<void(const SessionReport&)>& on_report = {}) const;

  nn::Classification verify_one(const SnapshotRecord& rec) const;
  const nn::Backend& backend() const noexcept { return *backend_; }
  const VerifierOptions& options() const noexcept { return opts_; }

 private:
  std::shared_ptr<const nn::ModelGraph> model_;
  VerifierOptions opts_;
  std::unique_ptr<nn::Backend> backend_;
};

std::string to_json(const std::vector<SessionReport>& reports, bool include_timings = false);
/// 2 if any session is Malicious, else 3 if any is Invalid, else 0.
int exit_code_for(const std::vector<SessionReport>& reports);

}  // namespace lma
