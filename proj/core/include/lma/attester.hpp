#pragma once

#include <cstdint>
#include <cstdio>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lma/bytes.hpp"
#include "lma/codec.hpp"
#include "lma/wasm/runtime.hpp"

namespace lma {

/// Destination for framed records. Writes happen on the guest thread, in
/// seq_no order.
class RecordSink {
 public:
  virtual ~RecordSink() = default;
  virtual void write(const SnapshotRecord& rec, ByteView framed) = 0;
  virtual void flush() {}
};

class FileSink : public RecordSink {
 public:
  explicit FileSink(const std::string& path);  // throws SinkUnavailable
  ~FileSink() override;
  void write(const SnapshotRecord& rec, ByteView framed) override;
  void flush() override;

 private:
  std::FILE* f_ = nullptr;
  std::string path_;
};

class TcpSink : public RecordSink {
 public:
  TcpSink(const std::string& host, std::uint16_t port);  // throws SinkUnavailable
  ~TcpSink() override;
  void write(const SnapshotRecord& rec, ByteView framed) override;

 private:
  int fd_ = -1;
};

/// Keeps every framed record in memory.
class MemorySink : public RecordSink {
 public:
  void write(const SnapshotRecord& rec, ByteView framed) override;
  const Bytes& bytes() const noexcept { return bytes_; }
  const std::vector<SnapshotRecord>& records() const noexcept { return records_; }

 private:
  Bytes bytes_;
  std::vector<SnapshotRecord> records_;
};

/// Forwards each record to a callback (in-process verification).
class CallbackSink : public RecordSink {
 public:
  using Fn = std::function<void(const SnapshotRecord&, ByteView framed)>;
  explicit CallbackSink(Fn fn) : fn_(std::move(fn)) {}
  void write(const SnapshotRecord& rec, ByteView framed) override { fn_(rec, framed); }

 private:
  Fn fn_;
};

struct SinkSpec {
  enum class Kind { File, Tcp };
  Kind kind = Kind::File;
  std::string path;
  std::string host;
  std::uint16_t port = 0;
};

/// Parses "file:PATH" or "tcp:HOST:PORT".
SinkSpec parse_sink(const std::string& s);
std::unique_ptr<RecordSink> open_sink(const SinkSpec& spec);

SessionId random_session_id();
/// Parses 32 hex digits.
SessionId parse_session_id(const std::string& hex);

/// Guest invocation parameters shared by attested and plain runs.
struct GuestOptions {
  std::vector<std::string> args{"guest"};
  std::vector<std::string> env;
  Bytes stdin_data;
  std::FILE* forward_stdout = nullptr;
  std::FILE* forward_stderr = nullptr;
  /// Extra host imports beyond WASI and the hook.
  std::function<void(wasm::Linker&)> extra_imports;
  wasm::InstanceOptions instance;
  std::string entry = "_start";
};

struct GuestResult {
  int exit_code = 0;
  std::optional<std::string> trap;
  Bytes stdout_data;
  Bytes stderr_data;
  Bytes final_memory;
  double wall_time_s = 0;
};

using HookFn = std::function<void(wasm::Instance&, std::uint32_t reason)>;

/// Runs a validated module under WASI. If the module imports lma.snapshot it
/// is bound to `hook` (a no-op when empty). Traps land in `trap` with exit
/// code 128 + 6; `proc_exit` supplies the exit code otherwise.
GuestResult run_guest(const wasm::Module& module, const GuestOptions& options, const HookFn& hook = {});

struct AttesterConfig {
  std::string module_path;
  /// Used instead of reading module_path when non-empty.
  Bytes module_bytes;
  SinkSpec sink;
  std::optional<SessionId> session_id;  // random when absent
  std::uint64_t max_snapshots = 0;      // 0 = unlimited
  GuestOptions guest;
};

struct RunSummary {
  SessionId session_id{};
  int exit_code = 0;
  std::optional<std::string> trap;
  std::uint64_t hook_invocations = 0;
  std::uint64_t snapshots_emitted = 0;
  std::uint64_t total_bytes_raw = 0;
  std::uint64_t total_bytes_compressed = 0;
  double wall_time_s = 0;
  Bytes stdout_data;
};

std::string to_json(const RunSummary& s);

/// Per-session capture state: sequence counter, cap and byte accounting.
class Capturer {
 public:
  Capturer(SessionId id, RecordSink& sink, std::uint64_t max_snapshots);
  /// Captures `memory` if under the cap; returns whether a record was emitted.
  bool capture(std::span<const std::uint8_t> memory, std::uint8_t reason);

  const SessionId& session() const noexcept { return id_; }
  std::uint64_t invocations() const noexcept { return invocations_; }
  std::uint64_t emitted() const noexcept { return next_seq_; }
  std::uint64_t raw_bytes() const noexcept { return raw_; }
  std::uint64_t compressed_bytes() const noexcept { return compressed_; }

 private:
  SessionId id_;
  RecordSink& sink_;
  std::uint64_t max_;
  std::uint64_t next_seq_ = 0;
  std::uint64_t invocations_ = 0;
  std::uint64_t raw_ = 0;
  std::uint64_t compressed_ = 0;
  Bytes frame_buf_;
};

/// Runs an instrumented module, emitting one record per hook invocation.
/// Throws MissingHookImport, SinkUnavailable, MalformedModule.
RunSummary run_attested(const AttesterConfig& config);
RunSummary run_attested(const AttesterConfig& config, RecordSink& sink);
RunSummary run_attested(const wasm::Module& module, const AttesterConfig& config, RecordSink& sink);

bool has_hook_import(const wasm::Module& m);

}  // namespace lma
