#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "lma/bytes.hpp"
#include "lma/wasm/runtime.hpp"

namespace lma::wasm {

struct WasiConfig {
  std::vector<std::string> args;  // argv[0] included
  std::vector<std::string> env;   // "KEY=VALUE"
  Bytes stdin_data;
  /// When set, guest stdout/stderr bytes are also copied here as they arrive.
  std::FILE* forward_stdout = nullptr;
  std::FILE* forward_stderr = nullptr;
  std::uint64_t random_seed = 0x9E3779B97F4A7C15ull;
};

/// A deterministic subset of wasi_snapshot_preview1: args, environ,
/// stdio, proc_exit, a frozen clock and a seeded random_get. File system
/// calls report EBADF/ESPIPE.
class WasiContext {
 public:
  explicit WasiContext(WasiConfig config);

  /// Defines every supported wasi_snapshot_preview1 function in `linker`.
  /// The context must outlive instances linked against it.
  void register_with(Linker& linker);

  const Bytes& stdout_data() const noexcept { return stdout_; }
  const Bytes& stderr_data() const noexcept { return stderr_; }

 private:
  std::uint32_t write_fd(Instance& inst, std::uint32_t fd, std::uint32_t iovs, std::uint32_t count,
                         std::uint32_t nwritten_ptr);
  std::uint32_t read_fd(Instance& inst, std::uint32_t fd, std::uint32_t iovs, std::uint32_t count,
                        std::uint32_t nread_ptr);

  WasiConfig config_;
  std::size_t stdin_pos_ = 0;
  Bytes stdout_;
  Bytes stderr_;
  std::uint64_t rng_state_;
};

}  // namespace lma::wasm
