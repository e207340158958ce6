#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "lma/bytes.hpp"

namespace lma {

enum class Policy : std::uint8_t { ImportFunction, LocalFunction, MemoryInstruction };

/// Hook reason codes passed as the hook's single i32 argument.
enum class Reason : std::uint8_t { ImportBoundary = 0, FunctionEntry = 1, PreStore = 2 };

inline constexpr std::string_view kHookModule = "lma";
inline constexpr std::string_view kHookName = "snapshot";

const char* policy_name(Policy p) noexcept;
/// Accepts "import", "local", "memory" (and the full enum spellings).
Policy parse_policy(std::string_view s);
Reason policy_reason(Policy p) noexcept;

struct InstrumentOptions {
  /// Also hook memory.fill / memory.copy / memory.init under MemoryInstruction.
  bool hook_bulk_memory = false;
};

struct InstrumentationReport {
  Policy policy = Policy::ImportFunction;
  std::uint64_t sites_instrumented = 0;
  std::uint64_t functions_touched = 0;
  std::uint64_t original_size_bytes = 0;
  std::uint64_t instrumented_size_bytes = 0;
  std::uint32_t hook_import_index = 0;

  bool operator==(const InstrumentationReport&) const = default;
};

std::string to_json(const InstrumentationReport& r);

struct InstrumentResult {
  Bytes wasm;
  InstrumentationReport report;
};

/// Adds the ("lma","snapshot") (i32)->() import and inserts hook calls per
/// `policy`. Throws Error with MultiMemory, MalformedModule or
/// AlreadyInstrumented.
InstrumentResult instrument(ByteView module_bytes, Policy policy, const InstrumentOptions& options = {});

}  // namespace lma
