#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lma/wasm/module.hpp"

namespace lma::wasm {

/// Raised when guest execution traps. Carries the trap reason only; the
/// embedder decides how to surface it.
class Trap : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown by a host function to stop the guest with an exit status
/// (WASI proc_exit).
struct ProcExit {
  int code = 0;
};

class Instance;

/// Host function callback. `args` and `results` are raw value bits:
/// i32 zero-extended, f32 in the low 32 bits.
using HostFn = std::function<void(Instance&, std::span<const std::uint64_t> args, std::span<std::uint64_t> results)>;

struct HostFunction {
  FuncType type;
  HostFn fn;
};

/// Resolves function (and global) imports by (module, name).
class Linker {
 public:
  void define(const std::string& module, const std::string& name, FuncType type, HostFn fn);
  void define_global(const std::string& module, const std::string& name, std::uint64_t value);
  const HostFunction* find(const std::string& module, const std::string& name) const;
  const std::uint64_t* find_global(const std::string& module, const std::string& name) const;

 private:
  std::map<std::pair<std::string, std::string>, HostFunction> funcs_;
  std::map<std::pair<std::string, std::string>, std::uint64_t> globals_;
};

struct InstanceOptions {
  /// Upper bound on memory growth in pages, on top of the module's own max.
  std::uint32_t max_memory_pages = 16384;
  /// Value stack slots shared by all frames.
  std::size_t stack_slots = 1u << 20;
  std::uint32_t max_call_depth = 4096;
  /// Branch/call budget; 0 disables the limit. Exhaustion traps.
  std::uint64_t fuel = 0;
};

namespace detail {
struct CompiledModule;
}

/// An instantiated module executing on the built-in interpreter.
/// Not thread-safe; one instance per guest thread.
class Instance {
 public:
  /// Links imports, initializes memory/tables/globals, applies active
  /// segments, then runs the start function if present. The module must
  /// already be validated. Link failures throw Error(Errc::LinkError);
  /// traps during initialization propagate as Trap.
  static std::unique_ptr<Instance> instantiate(const Module& module, const Linker& linker,
                                               InstanceOptions options = {});

  ~Instance();
  Instance(const Instance&) = delete;
  Instance& operator=(const Instance&) = delete;

  std::vector<std::uint64_t> call(std::string_view export_name, std::span<const std::uint64_t> args = {});
  std::vector<std::uint64_t> call(std::uint32_t func_index, std::span<const std::uint64_t> args = {});

  const Module& module() const noexcept { return module_; }
  bool has_memory() const noexcept { return has_memory_; }
  std::span<std::uint8_t> memory() noexcept { return memory_; }
  std::span<const std::uint8_t> memory() const noexcept { return memory_; }
  std::uint32_t memory_pages() const noexcept { return static_cast<std::uint32_t>(memory_.size() / kPageSize); }

  std::uint64_t global(std::uint32_t index) const { return globals_.at(index); }

  /// Opaque embedder pointer, reachable from host callbacks.
  void* user_data = nullptr;

 private:
  Instance(Module module, InstanceOptions options);

  std::uint64_t* invoke(std::uint32_t func_index, std::uint64_t* sp, std::uint32_t depth);
  std::uint64_t* execute(std::uint32_t local_index, std::uint64_t* sp, std::uint32_t depth);
  std::uint32_t grow_memory(std::uint32_t delta);

  Module module_;
  InstanceOptions options_;
  std::unique_ptr<detail::CompiledModule> compiled_;
  std::vector<HostFunction> host_funcs_;
  std::vector<std::uint8_t> memory_;
  bool has_memory_ = false;
  std::uint32_t memory_max_pages_ = 0;
  std::vector<std::vector<std::uint32_t>> tables_;
  std::vector<std::uint64_t> globals_;
  std::vector<bool> data_dropped_;
  std::vector<bool> elem_dropped_;
  std::vector<std::uint64_t> stack_;
  std::uint64_t fuel_ = 0;
};

}  // namespace lma::wasm
