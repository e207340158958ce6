#include "lma/wasm/wasi.hpp"

#include <cstring>

namespace lma::wasm {

namespace {

constexpr std::uint32_t kSuccess = 0;
constexpr std::uint32_t kBadf = 8;
constexpr std::uint32_t kFault = 21;
constexpr std::uint32_t kInval = 28;
constexpr std::uint32_t kSpipe = 70;

constexpr auto I32 = ValType::I32;
constexpr auto I64 = ValType::I64;

struct Mem {
  std::span<std::uint8_t> bytes;

  bool ok(std::uint64_t addr, std::uint64_t len) const { return addr + len <= bytes.size(); }

  std::uint32_t u32(std::uint32_t addr) const {
    std::uint32_t v;
    std::memcpy(&v, bytes.data() + addr, 4);
    return v;
  }
  void put_u32(std::uint32_t addr, std::uint32_t v) { std::memcpy(bytes.data() + addr, &v, 4); }
  void put_u64(std::uint32_t addr, std::uint64_t v) { std::memcpy(bytes.data() + addr, &v, 8); }
};

std::uint32_t arg32(std::span<const std::uint64_t> args, std::size_t i) { return static_cast<std::uint32_t>(args[i]); }

// Writes a NUL-terminated string list in the argv/environ layout.
std::uint32_t put_strings(Instance& inst, const std::vector<std::string>& list, std::uint32_t ptrs, std::uint32_t buf) {
  Mem mem{inst.memory()};
  std::uint64_t size = 0;
  for (const auto& s : list) size += s.size() + 1;
  if (!mem.ok(ptrs, 4ull * list.size()) || !mem.ok(buf, size)) return kFault;
  for (const auto& s : list) {
    mem.put_u32(ptrs, buf);
    ptrs += 4;
    std::memcpy(mem.bytes.data() + buf, s.c_str(), s.size() + 1);
    buf += static_cast<std::uint32_t>(s.size() + 1);
  }
  return kSuccess;
}

std::uint32_t put_sizes(Instance& inst, const std::vector<std::string>& list, std::uint32_t count_ptr,
                        std::uint32_t size_ptr) {
  Mem mem{inst.memory()};
  if (!mem.ok(count_ptr, 4) || !mem.ok(size_ptr, 4)) return kFault;
  std::uint32_t size = 0;
  for (const auto& s : list) size += static_cast<std::uint32_t>(s.size() + 1);
  mem.put_u32(count_ptr, static_cast<std::uint32_t>(list.size()));
  mem.put_u32(size_ptr, size);
  return kSuccess;
}

}  // namespace

WasiContext::WasiContext(WasiConfig config) : config_(std::move(config)), rng_state_(config_.random_seed | 1) {}

std::uint32_t WasiContext::write_fd(Instance& inst, std::uint32_t fd, std::uint32_t iovs, std::uint32_t count,
                                    std::uint32_t nwritten_ptr) {
  if (fd != 1 && fd != 2) return kBadf;
  Mem mem{inst.memory()};
  if (!mem.ok(iovs, 8ull * count) || !mem.ok(nwritten_ptr, 4)) return kFault;
  Bytes& sink = fd == 1 ? stdout_ : stderr_;
  std::FILE* forward = fd == 1 ? config_.forward_stdout : config_.forward_stderr;
  std::uint32_t total = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t base = mem.u32(iovs + 8 * i);
    const std::uint32_t len = mem.u32(iovs + 8 * i + 4);
    if (!mem.ok(base, len)) return kFault;
    sink.insert(sink.end(), mem.bytes.begin() + base, mem.bytes.begin() + base + len);
    if (forward && len) std::fwrite(mem.bytes.data() + base, 1, len, forward);
    total += len;
  }
  mem.put_u32(nwritten_ptr, total);
  return kSuccess;
}

std::uint32_t WasiContext::read_fd(Instance& inst, std::uint32_t fd, std::uint32_t iovs, std::uint32_t count,
                                   std::uint32_t nread_ptr) {
  if (fd != 0) return kBadf;
  Mem mem{inst.memory()};
  if (!mem.ok(iovs, 8ull * count) || !mem.ok(nread_ptr, 4)) return kFault;
  std::uint32_t total = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t base = mem.u32(iovs + 8 * i);
    const std::uint32_t len = mem.u32(iovs + 8 * i + 4);
    if (!mem.ok(base, len)) return kFault;
    const std::size_t n = std::min<std::size_t>(len, config_.stdin_data.size() - stdin_pos_);
    std::memcpy(mem.bytes.data() + base, config_.stdin_data.data() + stdin_pos_, n);
    stdin_pos_ += n;
    total += static_cast<std::uint32_t>(n);
    if (n < len) break;
  }
  mem.put_u32(nread_ptr, total);
  return kSuccess;
}

void WasiContext::register_with(Linker& linker) {
  const std::string ns = "wasi_snapshot_preview1";
  auto ret = [](std::span<std::uint64_t> results, std::uint32_t v) { results[0] = v; };

  linker.define(ns, "fd_write", FuncType{{I32, I32, I32, I32}, {I32}}, [this, ret](Instance& inst, auto args, auto res) {
    ret(res, write_fd(inst, arg32(args, 0), arg32(args, 1), arg32(args, 2), arg32(args, 3)));
  });
  linker.define(ns, "fd_read", FuncType{{I32, I32, I32, I32}, {I32}}, [this, ret](Instance& inst, auto args, auto res) {
    ret(res, read_fd(inst, arg32(args, 0), arg32(args, 1), arg32(args, 2), arg32(args, 3)));
  });
  linker.define(ns, "proc_exit", FuncType{{I32}, {}}, [](Instance&, auto args, auto) {
    throw ProcExit{static_cast<int>(arg32(args, 0))};
  });
  linker.define(ns, "args_sizes_get", FuncType{{I32, I32}, {I32}}, [this, ret](Instance& inst, auto args, auto res) {
    ret(res, put_sizes(inst, config_.args, arg32(args, 0), arg32(args, 1)));
  });
  linker.define(ns, "args_get", FuncType{{I32, I32}, {I32}}, [this, ret](Instance& inst, auto args, auto res) {
    ret(res, put_strings(inst, config_.args, arg32(args, 0), arg32(args, 1)));
  });
  linker.define(ns, "environ_sizes_get", FuncType{{I32, I32}, {I32}}, [this, ret](Instance& inst, auto args, auto res) {
    ret(res, put_sizes(inst, config_.env, arg32(args, 0), arg32(args, 1)));
  });
  linker.define(ns, "environ_get", FuncType{{I32, I32}, {I32}}, [this, ret](Instance& inst, auto args, auto res) {
    ret(res, put_strings(inst, config_.env, arg32(args, 0), arg32(args, 1)));
  });
  linker.define(ns, "fd_close", FuncType{{I32}, {I32}}, [ret](Instance&, auto args, auto res) {
    ret(res, arg32(args, 0) <= 2 ? kSuccess : kBadf);
  });
  linker.define(ns, "fd_fdstat_get", FuncType{{I32, I32}, {I32}}, [ret](Instance& inst, auto args, auto res) {
    const std::uint32_t fd = arg32(args, 0);
    const std::uint32_t buf = arg32(args, 1);
    Mem mem{inst.memory()};
    if (fd > 2) return ret(res, kBadf);
    if (!mem.ok(buf, 24)) return ret(res, kFault);
    std::memset(mem.bytes.data() + buf, 0, 24);
    mem.bytes[buf] = 2;  // character device
    ret(res, kSuccess);
  });
  linker.define(ns, "fd_seek", FuncType{{I32, I64, I32, I32}, {I32}}, [ret](Instance&, auto args, auto res) {
    ret(res, arg32(args, 0) <= 2 ? kSpipe : kBadf);
  });
  linker.define(ns, "clock_time_get", FuncType{{I32, I64, I32}, {I32}}, [ret](Instance& inst, auto args, auto res) {
    Mem mem{inst.memory()};
    const std::uint32_t ptr = arg32(args, 2);
    if (arg32(args, 0) > 3) return ret(res, kInval);
    if (!mem.ok(ptr, 8)) return ret(res, kFault);
    mem.put_u64(ptr, 0);
    ret(res, kSuccess);
  });
  linker.define(ns, "random_get", FuncType{{I32, I32}, {I32}}, [this, ret](Instance& inst, auto args, auto res) {
    Mem mem{inst.memory()};
    const std::uint32_t buf = arg32(args, 0);
    const std::uint32_t len = arg32(args, 1);
    if (!mem.ok(buf, len)) return ret(res, kFault);
    for (std::uint32_t i = 0; i < len; ++i) {
      rng_state_ ^= rng_state_ << 13;
      rng_state_ ^= rng_state_ >> 7;
      rng_state_ ^= rng_state_ << 17;
      mem.bytes[buf + i] = static_cast<std::uint8_t>(rng_state_);
    }
    ret(res, kSuccess);
  });
}

}  // namespace lma::wasm
