#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <regex>
#include <sstream>

#include "fixtures.hpp"
#include "lma/attester.hpp"
#include "lma/error.hpp"
#include "lma/instrument.hpp"
#include "lma/wasm/validator.hpp"

using namespace lma;
using namespace lma::wasm;

namespace {

const Policy kPolicies[] = {Policy::ImportFunction, Policy::LocalFunction, Policy::MemoryInstruction};

std::vector<std::filesystem::path> corpus() {
  std::vector<std::filesystem::path> out;
  for (auto dir : {"modules/wasm", "kernels/wasm"})
    for (auto& p : test::wasm_files(dir)) {
      const std::string n = p.stem().string();
      if (n == "already_instrumented" || n == "two_memories" || n.rfind("malformed", 0) == 0) continue;
      out.push_back(p);
    }
  out.push_back(test::fixture("workload/framegen.wasm"));
  out.push_back(test::fixture("controls/pure_compute.wasm"));
  return out;
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// Site counts read straight off the WAT source text.
struct TextCounts {
  std::uint64_t import_calls = 0, defined_funcs = 0, stores = 0;
};

TextCounts count_wat(const std::string& stem) {
  std::string src = read_text(test::fixture("modules/wat/" + stem + ".wat"));
  src = std::regex_replace(src, std::regex(";;[^\n]*"), "");
  TextCounts c;
  std::vector<std::string> imported;
  std::regex imp(R"(\(import\s+"[^"]*"\s+"[^"]*"\s+\(func\s+(\$[\w.]+))");
  for (std::sregex_iterator it(src.begin(), src.end(), imp), end; it != end; ++it) imported.push_back((*it)[1]);
  std::regex call(R"(\bcall\s+(\$[\w.]+))");
  for (std::sregex_iterator it(src.begin(), src.end(), call), end; it != end; ++it)
    if (std::find(imported.begin(), imported.end(), (*it)[1].str()) != imported.end()) ++c.import_calls;
  std::regex def(R"(\n\s*\(func\b)");
  c.defined_funcs = std::distance(std::sregex_iterator(src.begin(), src.end(), def), std::sregex_iterator());
  std::regex store(R"(\b[if](32|64)\.store(8|16|32)?\b)");
  c.stores = std::distance(std::sregex_iterator(src.begin(), src.end(), store), std::sregex_iterator());
  return c;
}

// Host environment shared by original and instrumented runs; logs every
// env.* call so traces can be compared.
struct Trace {
  std::vector<std::uint64_t> events;
};

GuestOptions guest_for(Trace& trace, const Module& m) {
  GuestOptions g;
  g.stdin_data = {'p', 'i', 'n', 'g', '\n'};
  g.entry = m.find_export("_start", ExternKind::Func) ? "_start" : "";
  g.extra_imports = [&trace](Linker& l) {
    l.define("env", "log", FuncType{{ValType::I32}, {}},
             [&trace](Instance&, std::span<const std::uint64_t> a, std::span<std::uint64_t>) { trace.events.push_back(a[0]); });
    l.define("env", "tick", FuncType{{}, {}},
             [&trace](Instance&, std::span<const std::uint64_t>, std::span<std::uint64_t>) { trace.events.push_back(~0ull); });
    l.define_global("env", "base", 1000);
  };
  return g;
}

// Minimal independent reader for the function-names subsection.
std::map<std::uint32_t, std::string> function_names(const Module& m) {
  std::map<std::uint32_t, std::string> out;
  for (const auto& c : m.customs) {
    if (c.name != "name") continue;
    std::size_t p = 0;
    auto leb = [&] {
      std::uint32_t v = 0;
      for (unsigned s = 0;; s += 7) {
        std::uint8_t b = c.payload.at(p++);
        v |= std::uint32_t(b & 0x7F) << s;
        if (!(b & 0x80)) return v;
      }
    };
    while (p < c.payload.size()) {
      std::uint8_t id = c.payload[p++];
      std::uint32_t size = leb();
      std::size_t end = p + size;
      if (id == 1) {
        for (std::uint32_t n = leb(); n > 0; --n) {
          std::uint32_t idx = leb();
          std::uint32_t len = leb();
          out[idx] = std::string(c.payload.begin() + p, c.payload.begin() + p + len);
          p += len;
        }
      }
      p = end;
    }
  }
  return out;
}

Errc error_of(ByteView bytes, Policy p = Policy::ImportFunction) {
  try {
    instrument(bytes, p);
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::Io;
}

}  // namespace

TEST(Instrument, OutputValidatesForEveryPolicy) {
  for (const auto& path : corpus()) {
    for (Policy p : kPolicies) {
      Bytes in = read_file(path.string());
      InstrumentResult r = instrument(in, p);
      Module out;
      ASSERT_NO_THROW(out = decode_and_validate(r.wasm)) << path << " " << policy_name(p);
      EXPECT_TRUE(has_hook_import(out));
      const Import* hook = out.func_import(r.report.hook_import_index);
      ASSERT_NE(hook, nullptr);
      EXPECT_EQ(hook->module, "lma");
      EXPECT_EQ(hook->name, "snapshot");
      EXPECT_EQ(out.func_type(r.report.hook_import_index), (FuncType{{ValType::I32}, {}}));
      EXPECT_GE(r.report.instrumented_size_bytes, r.report.original_size_bytes);
      EXPECT_EQ(r.report.original_size_bytes, in.size());
      EXPECT_EQ(r.report.instrumented_size_bytes, r.wasm.size());
    }
  }
}

TEST(Instrument, SiteCountsMatchSourceText) {
  for (const auto& path : test::wasm_files("modules/wasm")) {
    const std::string stem = path.stem().string();
    if (!std::filesystem::exists(test::fixture("modules/wat/" + stem + ".wat"))) continue;
    if (stem == "already_instrumented" || stem == "two_memories") continue;
    TextCounts want = count_wat(stem);
    Bytes in = read_file(path.string());
    EXPECT_EQ(instrument(in, Policy::ImportFunction).report.sites_instrumented, want.import_calls) << stem;
    EXPECT_EQ(instrument(in, Policy::LocalFunction).report.sites_instrumented, want.defined_funcs) << stem;
    EXPECT_EQ(instrument(in, Policy::MemoryInstruction).report.sites_instrumented, want.stores) << stem;
  }
}

TEST(Instrument, ThreeImportCallSites) {
  auto r = instrument(test::load_fixture("modules/wasm/imports_three_sites.wasm"), Policy::ImportFunction);
  EXPECT_EQ(r.report.sites_instrumented, 3u);
  EXPECT_EQ(r.report.functions_touched, 2u);
  EXPECT_EQ(r.report.hook_import_index, 2u);
}

TEST(Instrument, NoStoresMeansOnlyTheImportIsAdded) {
  Bytes in = test::load_fixture("modules/wasm/no_imports_no_stores.wasm");
  auto r = instrument(in, Policy::MemoryInstruction);
  EXPECT_EQ(r.report.sites_instrumented, 0u);
  Module a = decode_and_validate(in);
  Module b = decode_and_validate(r.wasm);
  ASSERT_EQ(b.imports.size(), a.imports.size() + 1);
  EXPECT_EQ(b.imports.back().module, "lma");
  ASSERT_EQ(a.codes.size(), b.codes.size());
  // Bodies differ only in shifted call immediates; here every call targets
  // function 0 -> 1, which has the same one-byte LEB width.
  for (std::size_t i = 0; i < a.codes.size(); ++i) EXPECT_EQ(a.codes[i].code.size(), b.codes[i].code.size());
  for (const auto& e : a.exports) {
    auto idx = b.find_export(e.name, e.kind);
    ASSERT_TRUE(idx);
    EXPECT_EQ(*idx, e.index + 1);
  }
}

TEST(Instrument, BehaviourIsTransparentWithNoopHook) {
  for (const auto& path : corpus()) {
    Bytes in = read_file(path.string());
    Module orig = decode_and_validate(in);
    Trace t0;
    GuestResult base = run_guest(orig, guest_for(t0, orig));
    for (Policy p : kPolicies) {
      Module inst = decode_and_validate(instrument(in, p).wasm);
      Trace t1;
      std::uint64_t hooks = 0;
      GuestResult got = run_guest(inst, guest_for(t1, inst), [&](Instance&, std::uint32_t reason) {
        EXPECT_EQ(reason, static_cast<std::uint32_t>(policy_reason(p)));
        ++hooks;
      });
      EXPECT_EQ(got.exit_code, base.exit_code) << path << " " << policy_name(p);
      EXPECT_EQ(got.trap, base.trap);
      EXPECT_EQ(got.stdout_data, base.stdout_data);
      EXPECT_EQ(got.final_memory, base.final_memory) << path << " " << policy_name(p);
      EXPECT_EQ(t1.events, t0.events);
    }
  }
}

TEST(Instrument, DeterministicOutput) {
  for (const auto& path : corpus()) {
    for (Policy p : kPolicies) {
      Bytes in = read_file(path.string());
      auto a = instrument(in, p);
      auto b = instrument(in, p);
      EXPECT_EQ(a.wasm, b.wasm);
      EXPECT_EQ(a.report, b.report);
      EXPECT_EQ(to_json(a.report), to_json(b.report));
    }
  }
}

TEST(Instrument, IndicesShiftConsistently) {
  for (const auto& path : corpus()) {
    Bytes in = read_file(path.string());
    Module a = decode(in);
    const std::uint32_t first_defined = a.num_imported(ExternKind::Func);
    auto shift = [&](std::uint32_t i) { return i < first_defined ? i : i + 1; };
    for (Policy p : kPolicies) {
      Module b = decode(instrument(in, p).wasm);
      EXPECT_EQ(b.num_functions(), a.num_functions() + 1);
      for (const auto& e : a.exports) {
        if (e.kind != ExternKind::Func) continue;
        auto idx = b.find_export(e.name, e.kind);
        ASSERT_TRUE(idx);
        EXPECT_EQ(*idx, shift(e.index));
      }
      ASSERT_EQ(a.start.has_value(), b.start.has_value());
      if (a.start) {
        EXPECT_EQ(*b.start, shift(*a.start));
      }
      ASSERT_EQ(a.elems.size(), b.elems.size());
      for (std::size_t s = 0; s < a.elems.size(); ++s) {
        ASSERT_EQ(a.elems[s].funcs.size(), b.elems[s].funcs.size());
        for (std::size_t k = 0; k < a.elems[s].funcs.size(); ++k)
          EXPECT_EQ(b.elems[s].funcs[k], shift(a.elems[s].funcs[k]));
      }
      // Names follow their functions.
      auto na = function_names(a), nb = function_names(b);
      EXPECT_EQ(na.size(), nb.size()) << path;
      for (const auto& [idx, name] : na) {
        ASSERT_TRUE(nb.count(shift(idx))) << path << " " << name;
        EXPECT_EQ(nb[shift(idx)], name);
      }
      // Every pre-existing function keeps its type.
      for (std::uint32_t i = 0; i < a.num_functions(); ++i) EXPECT_EQ(b.func_type(shift(i)), a.func_type(i));
    }
  }
}

TEST(Instrument, NameSectionIsPresentInFixtures) {
  Module a = decode(test::load_fixture("modules/wasm/start_and_elems.wasm"));
  auto names = function_names(a);
  ASSERT_FALSE(names.empty());
  EXPECT_EQ(names[0], "log");
}

TEST(Instrument, RuntimeCountsAreOrderedOnKernels) {
  for (const auto& path : test::wasm_files("kernels/wasm")) {
    Bytes in = read_file(path.string());
    std::uint64_t counts[3] = {};
    for (Policy p : kPolicies) {
      Module m = decode_and_validate(instrument(in, p).wasm);
      Trace t;
      run_guest(m, guest_for(t, m), [&](Instance&, std::uint32_t) { ++counts[static_cast<int>(p)]; });
    }
    EXPECT_LE(counts[0], counts[1]) << path;
    EXPECT_LE(counts[1], counts[2]) << path;
  }
}

TEST(Instrument, Errors) {
  EXPECT_EQ(error_of(test::load_fixture("modules/wasm/two_memories.wasm")), Errc::MultiMemory);
  EXPECT_EQ(error_of(test::load_fixture("modules/wasm/already_instrumented.wasm")), Errc::AlreadyInstrumented);
  EXPECT_EQ(error_of(test::load_fixture("modules/wasm/malformed_truncated.wasm")), Errc::MalformedModule);
  EXPECT_EQ(error_of(test::load_fixture("modules/wasm/malformed_magic.wasm")), Errc::MalformedModule);
  EXPECT_EQ(error_of(Bytes{}), Errc::MalformedModule);
  // Instrumenting twice is rejected.
  Bytes once = instrument(test::load_fixture("modules/wasm/echo.wasm"), Policy::LocalFunction).wasm;
  EXPECT_EQ(error_of(once), Errc::AlreadyInstrumented);
}

TEST(Instrument, InvalidBodyIsMalformed) {
  // (func (result i32)) with an empty body fails type checking.
  Bytes m{0x00, 0x61, 0x73, 0x6d, 0x01, 0x00, 0x00, 0x00, 0x01, 0x05, 0x01, 0x60, 0x00, 0x01, 0x7f,
          0x03, 0x02, 0x01, 0x00, 0x0a, 0x04, 0x01, 0x02, 0x00, 0x0b};
  EXPECT_EQ(error_of(m), Errc::MalformedModule);
}

TEST(Instrument, BulkMemoryHooksAreOptIn) {
  Bytes in = test::load_fixture("modules/wasm/bulk_memory.wasm");
  auto off = instrument(in, Policy::MemoryInstruction);
  InstrumentOptions o;
  o.hook_bulk_memory = true;
  auto on = instrument(in, Policy::MemoryInstruction, o);
  EXPECT_GT(on.report.sites_instrumented, off.report.sites_instrumented);
  EXPECT_NO_THROW(decode_and_validate(on.wasm));
}

TEST(Instrument, PolicyNames) {
  for (Policy p : kPolicies) EXPECT_EQ(parse_policy(policy_name(p)), p);
  EXPECT_EQ(parse_policy("import"), Policy::ImportFunction);
  EXPECT_EQ(parse_policy("local"), Policy::LocalFunction);
  EXPECT_EQ(parse_policy("memory"), Policy::MemoryInstruction);
  EXPECT_THROW(parse_policy("everything"), Error);
}
