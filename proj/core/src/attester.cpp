#include "lma/attester.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <nlohmann/json.hpp>
#include <random>

#include "lma/error.hpp"
#include "lma/instrument.hpp"
#include "lma/wasm/validator.hpp"
#include "lma/wasm/wasi.hpp"

namespace lma {

using namespace wasm;

FileSink::FileSink(const std::string& path) : path_(path) {
  f_ = std::fopen(path.c_str(), "wb");
  if (!f_) throw Error(Errc::SinkUnavailable, "cannot open " + path + ": " + std::strerror(errno));
}

FileSink::~FileSink() {
  if (f_) std::fclose(f_);
}

void FileSink::write(const SnapshotRecord&, ByteView framed) {
  if (std::fwrite(framed.data(), 1, framed.size(), f_) != framed.size())
    throw Error(Errc::SinkUnavailable, "write to " + path_ + " failed");
}

void FileSink::flush() {
  if (std::fflush(f_) != 0) throw Error(Errc::SinkUnavailable, "flush of " + path_ + " failed");
}

TcpSink::TcpSink(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (int rc = getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res); rc != 0)
    throw Error(Errc::SinkUnavailable, "resolve " + host + ": " + gai_strerror(rc));
  for (addrinfo* p = res; p; p = p->ai_next) {
    int fd = ::socket(p->ai_family, p->ai_socktype, p->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, p->ai_addr, p->ai_addrlen) == 0) {
      fd_ = fd;
      break;
    }
    ::close(fd);
  }
  freeaddrinfo(res);
  if (fd_ < 0) throw Error(Errc::SinkUnavailable, "cannot connect to " + host + ":" + std::to_string(port));
}

TcpSink::~TcpSink() {
  if (fd_ >= 0) ::close(fd_);
}

void TcpSink::write(const SnapshotRecord&, ByteView framed) {
  std::size_t off = 0;
  while (off < framed.size()) {
    ssize_t n = ::send(fd_, framed.data() + off, framed.size() - off, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(Errc::SinkUnavailable, std::string("send failed: ") + std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
}

void MemorySink::write(const SnapshotRecord& rec, ByteView framed) {
  put_bytes(bytes_, framed);
  records_.push_back(rec);
}

SinkSpec parse_sink(const std::string& s) {
  SinkSpec spec;
  if (s.starts_with("file:") && s.size() > 5) {
    spec.kind = SinkSpec::Kind::File;
    spec.path = s.substr(5);
    return spec;
  }
  if (s.starts_with("tcp:")) {
    auto rest = s.substr(4);
    auto colon = rest.rfind(':');
    if (colon != std::string::npos && colon > 0) {
      spec.kind = SinkSpec::Kind::Tcp;
      spec.host = rest.substr(0, colon);
      int port = 0;
      try {
        port = std::stoi(rest.substr(colon + 1));
      } catch (...) {
      }
      if (port > 0 && port < 65536) {
        spec.port = static_cast<std::uint16_t>(port);
        return spec;
      }
    }
  }
  throw Error(Errc::InvalidArgument, "sink must be file:PATH or tcp:HOST:PORT, got '" + s + "'");
}

std::unique_ptr<RecordSink> open_sink(const SinkSpec& spec) {
  if (spec.kind == SinkSpec::Kind::File) return std::make_unique<FileSink>(spec.path);
  return std::make_unique<TcpSink>(spec.host, spec.port);
}

SessionId random_session_id() {
  std::random_device rd;
  SessionId id;
  for (std::size_t i = 0; i < id.size(); i += 4) {
    std::uint32_t v = rd();
    std::memcpy(id.data() + i, &v, 4);
  }
  return id;
}

SessionId parse_session_id(const std::string& hex) {
  if (hex.size() != 32) throw Error(Errc::InvalidArgument, "session id must be 32 hex digits");
  SessionId id;
  for (std::size_t i = 0; i < 16; ++i) {
    try {
      std::size_t used = 0;
      id[i] = static_cast<std::uint8_t>(std::stoul(hex.substr(2 * i, 2), &used, 16));
      if (used != 2) throw 0;
    } catch (...) {
      throw Error(Errc::InvalidArgument, "session id must be 32 hex digits");
    }
  }
  return id;
}

bool has_hook_import(const Module& m) {
  for (const auto& im : m.imports)
    if (im.kind == ExternKind::Func && im.module == kHookModule && im.name == kHookName) return true;
  return false;
}

GuestResult run_guest(const Module& module, const GuestOptions& options, const HookFn& hook) {
  WasiConfig wc;
  wc.args = options.args;
  wc.env = options.env;
  wc.stdin_data = options.stdin_data;
  wc.forward_stdout = options.forward_stdout;
  wc.forward_stderr = options.forward_stderr;
  WasiContext wasi(wc);
  Linker linker;
  wasi.register_with(linker);
  if (options.extra_imports) options.extra_imports(linker);
  linker.define(std::string(kHookModule), std::string(kHookName), FuncType{{ValType::I32}, {}},
                [&hook](Instance& inst, std::span<const std::uint64_t> args, std::span<std::uint64_t>) {
                  if (hook) hook(inst, static_cast<std::uint32_t>(args[0]));
                });

  GuestResult res;
  auto t0 = std::chrono::steady_clock::now();
  std::unique_ptr<Instance> inst;
  try {
    inst = Instance::instantiate(module, linker, options.instance);
    if (!options.entry.empty()) inst->call(options.entry);
    res.exit_code = 0;
  } catch (const ProcExit& e) {
    res.exit_code = e.code;
  } catch (const Trap& t) {
    res.trap = t.what();
    res.exit_code = 134;
  }
  res.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  res.stdout_data = wasi.stdout_data();
  res.stderr_data = wasi.stderr_data();
  if (inst && inst->has_memory()) res.final_memory.assign(inst->memory().begin(), inst->memory().end());
  return res;
}

Capturer::Capturer(SessionId id, RecordSink& sink, std::uint64_t max_snapshots)
    : id_(id), sink_(sink), max_(max_snapshots) {}

bool Capturer::capture(std::span<const std::uint8_t> memory, std::uint8_t reason) {
  ++invocations_;
  if (max_ && next_seq_ >= max_) return false;
  SnapshotRecord rec = make_record(id_, next_seq_, reason, memory);
  frame_buf_.clear();
  append_record(frame_buf_, rec);
  sink_.write(rec, frame_buf_);
  ++next_seq_;
  raw_ += memory.size();
  compressed_ += rec.payload.size();
  return true;
}

std::string to_json(const RunSummary& s) {
  nlohmann::ordered_json j;
  j["session_id"] = session_hex(s.session_id);
  j["exit_code"] = s.exit_code;
  j["trap"] = s.trap ? nlohmann::ordered_json(*s.trap) : nlohmann::ordered_json(nullptr);
  j["hook_invocations"] = s.hook_invocations;
  j["snapshots_emitted"] = s.snapshots_emitted;
  j["total_bytes_raw"] = s.total_bytes_raw;
  j["total_bytes_compressed"] = s.total_bytes_compressed;
  j["wall_time_s"] = s.wall_time_s;
  return j.dump(2);
}

RunSummary run_attested(const Module& module, const AttesterConfig& config, RecordSink& sink) {
  if (!has_hook_import(module))
    throw Error(Errc::MissingHookImport, "module does not import lma.snapshot; instrument it first");
  Capturer cap(config.session_id.value_or(random_session_id()), sink, config.max_snapshots);
  GuestResult g = run_guest(module, config.guest, [&cap](Instance& inst, std::uint32_t reason) {
    cap.capture(inst.memory(), static_cast<std::uint8_t>(reason));
  });
  sink.flush();
  RunSummary s;
  s.session_id = cap.session();
  s.exit_code = g.exit_code;
  s.trap = std::move(g.trap);
  s.hook_invocations = cap.invocations();
  s.snapshots_emitted = cap.emitted();
  s.total_bytes_raw = cap.raw_bytes();
  s.total_bytes_compressed = cap.compressed_bytes();
  s.wall_time_s = g.wall_time_s;
  s.stdout_data = std::move(g.stdout_data);
  return s;
}

namespace {
Module load_module(const AttesterConfig& config) {
  Bytes bytes = config.module_bytes.empty() ? read_file(config.module_path) : config.module_bytes;
  return decode_and_validate(bytes);
}
}  // namespace

RunSummary run_attested(const AttesterConfig& config, RecordSink& sink) {
  return run_attested(load_module(config), config, sink);
}

RunSummary run_attested(const AttesterConfig& config) {
  Module m = load_module(config);
  if (!has_hook_import(m))
    throw Error(Errc::MissingHookImport, "module does not import lma.snapshot; instrument it first");
  auto sink = open_sink(config.sink);
  return run_attested(m, config, *sink);
}

}  // namespace lma
