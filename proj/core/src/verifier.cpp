#include "lma/verifier.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <mutex>
#include <nlohmann/json.hpp>
#include <thread>

#include "lma/error.hpp"
#include "lma/image.hpp"

namespace lma {

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

constexpr std::size_t kPayloadLenOffset = 4 + 1 + 16 + 8 + 1 + 8;

struct Scan {
  enum Status { Ok, NeedMore, Damaged, Fatal } status = NeedMore;
  SnapshotRecord rec;
  std::size_t consumed = 0;
  std::optional<SessionId> sid;
  std::string why;
};

Scan scan_record(ByteView d, std::uint64_t max_payload) {
  Scan s;
  const std::size_t probe = std::min<std::size_t>(d.size(), 4);
  if (std::memcmp(d.data(), "LMA1", probe) != 0) {
    s.status = Scan::Fatal;
    s.why = "BadMagic: record magic is not LMA1";
    return s;
  }
  if (d.size() < kRecordHeaderSize) return s;
  if (d[4] != kRecordVersion) {
    s.status = Scan::Fatal;
    s.why = "UnsupportedVersion: record version " + std::to_string(d[4]);
    return s;
  }
  SessionId sid;
  std::copy(d.begin() + 5, d.begin() + 21, sid.begin());
  s.sid = sid;
  std::uint64_t payload_len;
  std::memcpy(&payload_len, d.data() + kPayloadLenOffset, 8);
  if (payload_len > max_payload) {
    s.status = Scan::Fatal;
    s.why = "Truncated: payload length " + std::to_string(payload_len) + " exceeds limit";
    return s;
  }
  const std::size_t total = kRecordHeaderSize + static_cast<std::size_t>(payload_len) + 4;
  if (d.size() < total) return s;
  s.consumed = total;
  try {
    s.rec = parse_record(d.subspan(0, total));
    s.status = Scan::Ok;
  } catch (const Error& e) {
    s.status = Scan::Damaged;
    s.why = e.what();
  }
  return s;
}

}  // namespace

const char* session_verdict_name(SessionVerdict v) noexcept {
  switch (v) {
    case SessionVerdict::Benign: return "Benign";
    case SessionVerdict::Malicious: return "Malicious";
    case SessionVerdict::Invalid: return "Invalid";
  }
  return "?";
}

SessionVerifier::SessionVerifier(SessionId id, const nn::Backend& backend, const VerifierOptions& opts)
    : backend_(backend), opts_(opts), agg_(opts.verdict) {
  rep_.session_id = id;
}

void SessionVerifier::mark_invalid(const std::string& reason) {
  if (!rep_.invalid_reason) rep_.invalid_reason = reason;
}

void SessionVerifier::add(const SnapshotRecord& rec) {
  if (rec.seq_no != expected_seq_) {
    mark_invalid(rec.seq_no > expected_seq_ ? "gap: expected seq " + std::to_string(expected_seq_) + ", got " + std::to_string(rec.seq_no)
                                            : "regression: seq " + std::to_string(rec.seq_no) + " after " + std::to_string(expected_seq_ - 1));
  }
  const bool in_order = rec.seq_no >= expected_seq_;
  if (in_order) expected_seq_ = rec.seq_no + 1;

  Bytes memory;
  auto t0 = Clock::now();
  try {
    if (rec.mem_size_bytes % 65536 != 0) throw Error(Errc::LengthMismatch, "memory size is not a whole number of pages");
    memory = record_memory(rec);
  } catch (const Error& e) {
    rep_.timings.decode_s += since(t0);
    mark_invalid("seq " + std::to_string(rec.seq_no) + ": " + e.what());
    return;
  }
  rep_.timings.decode_s += since(t0);
  t0 = Clock::now();
  MemoryImage img = to_image(memory, opts_.image_side);
  rep_.timings.image_s += since(t0);
  t0 = Clock::now();
  nn::Classification c = backend_.classify(img);
  rep_.timings.infer_s += since(t0);

  ++rep_.snapshots;
  if (c.label == nn::Label::Corrupted) ++rep_.corrupted_count;
  rep_.per_snapshot.push_back({rec.seq_no, c.score, c.label});
  if (!in_order) return;
  auto st = agg_.feed(rec.seq_no, c.label);
  if (st.malicious && !announced_) {
    announced_ = true;
    if (opts_.on_malicious) opts_.on_malicious(rep_.session_id, *st.trigger_seq);
  }
}

SessionReport SessionVerifier::finish() {
  SessionReport out = rep_;
  try {
    Verdict v = agg_.finalize();
    out.first_trigger_seq = v.trigger_seq;
    out.verdict = v.kind == VerdictKind::Malicious ? SessionVerdict::Malicious : SessionVerdict::Benign;
    if (v.trigger_seq && !announced_ && opts_.on_malicious) {
      announced_ = true;
      opts_.on_malicious(rep_.session_id, *v.trigger_seq);
    }
  } catch (const Error& e) {
    if (!out.invalid_reason) out.invalid_reason = e.what();
  }
  if (out.invalid_reason) out.verdict = SessionVerdict::Invalid;
  return out;
}

StreamDemux::StreamDemux(const nn::Backend& backend, const VerifierOptions& opts) : backend_(backend), opts_(opts) {}

SessionVerifier& StreamDemux::session(const SessionId& id) {
  auto it = sessions_.find(id);
  if (it == sessions_.end()) {
    it = sessions_.emplace(id, std::make_unique<SessionVerifier>(id, backend_, opts_)).first;
    order_.push_back(id);
  }
  return *it->second;
}

void StreamDemux::invalidate_current(const std::optional<SessionId>& id, const std::string& why) {
  if (id) {
    session(*id).mark_invalid(why);
  } else if (last_) {
    session(*last_).mark_invalid(why);
  }
}

std::size_t StreamDemux::feed(ByteView buf) {
  std::size_t pos = 0;
  while (!failed_ && pos < buf.size()) {
    Scan s = scan_record(buf.subspan(pos), opts_.max_record_bytes);
    switch (s.status) {
      case Scan::NeedMore: return pos;
      case Scan::Fatal:
        invalidate_current(s.sid, s.why);
        failed_ = true;
        return buf.size();
      case Scan::Damaged:
        invalidate_current(s.sid, "record dropped: " + s.why);
        last_ = s.sid;
        pos += s.consumed;
        break;
      case Scan::Ok:
        last_ = s.rec.session_id;
        session(s.rec.session_id).add(s.rec);
        pos += s.consumed;
        break;
    }
  }
  return failed_ ? buf.size() : pos;
}

std::vector<SessionReport> StreamDemux::finish(std::size_t leftover) {
  if (leftover && !failed_) invalidate_current(std::nullopt, "Truncated: stream ends inside a record");
  std::vector<SessionReport> out;
  for (const auto& id : order_) out.push_back(sessions_.at(id)->finish());
  return out;
}

Verifier::Verifier(std::shared_ptr<const nn::ModelGraph> model, VerifierOptions opts)
    : model_(std::move(model)), opts_(std::move(opts)) {
  opts_.verdict.check();
  backend_ = nn::BackendRegistry::global().create(opts_.backend, model_);
}

std::vector<SessionReport> Verifier::verify_bytes(ByteView stream) const {
  StreamDemux demux(*backend_, opts_);
  std::size_t used = demux.feed(stream);
  return demux.finish(stream.size() - used);
}

std::vector<SessionReport> Verifier::verify_file(const std::string& path) const {
  Bytes data;
  try {
    data = read_file(path);
  } catch (const Error& e) {
    throw Error(Errc::SourceUnavailable, e.what());
  }
  return verify_bytes(data);
}

nn::Classification Verifier::verify_one(const SnapshotRecord& rec) const {
  return backend_->classify(to_image(record_memory(rec), opts_.image_side));
}

std::vector<SessionReport> Verifier::listen(std::uint16_t port, std::size_t max_connections,
                                            const std::function<void(std::uint16_t)>& on_listening,
                                            const std::function<void(const SessionReport&)>& on_report) const {
  int lfd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (lfd < 0) throw Error(Errc::SourceUnavailable, std::string("socket: ") + std::strerror(errno));
  int one = 1;
  ::setsockopt(lfd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_ANY);
  addr.sin_port = htons(port);
  if (::bind(lfd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(lfd, 16) != 0) {
    std::string why = std::strerror(errno);
    ::close(lfd);
    throw Error(Errc::SourceUnavailable, "cannot listen on port " + std::to_string(port) + ": " + why);
  }
  socklen_t len = sizeof addr;
  ::getsockname(lfd, reinterpret_cast<sockaddr*>(&addr), &len);
  if (on_listening) on_listening(ntohs(addr.sin_port));

  std::mutex mu;
  std::vector<SessionReport> reports;
  std::vector<std::thread> workers;
  // Each connection reads only when its buffer lacks a whole record, so a
  // slow verifier pushes back on the producer through TCP flow control.
  auto serve = [&](int fd) {
    StreamDemux demux(*backend_, opts_);
    Bytes buf;
    std::uint8_t chunk[1 << 16];
    for (;;) {
      ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) break;
      buf.insert(buf.end(), chunk, chunk + n);
      std::size_t used = demux.feed(buf);
      buf.erase(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(used));
      if (demux.failed()) break;
    }
    ::close(fd);
    auto done = demux.finish(buf.size());
    std::lock_guard lock(mu);
    for (auto& r : done) {
      if (on_report) on_report(r);
      reports.push_back(std::move(r));
    }
  };
  for (std::size_t accepted = 0; max_connections == 0 || accepted < max_connections; ++accepted) {
    int cfd = ::accept(lfd, nullptr, nullptr);
    if (cfd < 0) {
      if (errno == EINTR) {
        --accepted;
        continue;
      }
      break;
    }
    workers.emplace_back(serve, cfd);
  }
  for (auto& t : workers) t.join();
  ::close(lfd);
  std::sort(reports.begin(), reports.end(),
            [](const SessionReport& a, const SessionReport& b) { return a.session_id < b.session_id; });
  return reports;
}

std::string to_json(const std::vector<SessionReport>& reports, bool include_timings) {
  using J = nlohmann::ordered_json;
  J sessions = J::array();
  for (const auto& r : reports) {
    J s;
    s["session_id"] = session_hex(r.session_id);
    s["verdict"] = session_verdict_name(r.verdict);
    s["snapshots"] = r.snapshots;
    s["corrupted_count"] = r.corrupted_count;
    if (r.first_trigger_seq) s["first_trigger_seq"] = *r.first_trigger_seq;
    if (r.invalid_reason) s["invalid_reason"] = *r.invalid_reason;
    J per = J::array();
    for (const auto& p : r.per_snapshot) per.push_back(J{{"seq", p.seq}, {"score", p.score}, {"label", nn::label_name(p.label)}});
    s["per_snapshot"] = std::move(per);
    if (include_timings)
      s["timings_s"] = J{{"decode", r.timings.decode_s}, {"image", r.timings.image_s}, {"infer", r.timings.infer_s}};
    sessions.push_back(std::move(s));
  }
  return J{{"sessions", std::move(sessions)}}.dump(2);
}

int exit_code_for(const std::vector<SessionReport>& reports) {
  bool invalid = false;
  for (const auto& r : reports) {
    if (r.verdict == SessionVerdict::Malicious) return 2;
    invalid |= r.verdict == SessionVerdict::Invalid;
  }
  return invalid ? 3 : 0;
}

}  // namespace lma
