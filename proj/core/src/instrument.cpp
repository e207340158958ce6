#include "lma/instrument.hpp"

#include <nlohmann/json.hpp>

#include "lma/error.hpp"
#include "lma/wasm/module.hpp"
#include "lma/wasm/opcodes.hpp"
#include "lma/wasm/validator.hpp"

namespace lma {

using namespace wasm;

const char* policy_name(Policy p) noexcept {
  switch (p) {
    case Policy::ImportFunction: return "import";
    case Policy::LocalFunction: return "local";
    case Policy::MemoryInstruction: return "memory";
  }
  return "?";
}

Policy parse_policy(std::string_view s) {
  if (s == "import" || s == "ImportFunction") return Policy::ImportFunction;
  if (s == "local" || s == "LocalFunction") return Policy::LocalFunction;
  if (s == "memory" || s == "MemoryInstruction") return Policy::MemoryInstruction;
  throw Error(Errc::InvalidArgument, "unknown policy '" + std::string(s) + "'");
}

Reason policy_reason(Policy p) noexcept {
  switch (p) {
    case Policy::ImportFunction: return Reason::ImportBoundary;
    case Policy::LocalFunction: return Reason::FunctionEntry;
    case Policy::MemoryInstruction: return Reason::PreStore;
  }
  return Reason::ImportBoundary;
}

std::string to_json(const InstrumentationReport& r) {
  nlohmann::ordered_json j;
  j["policy"] = policy_name(r.policy);
  j["sites_instrumented"] = r.sites_instrumented;
  j["functions_touched"] = r.functions_touched;
  j["original_size_bytes"] = r.original_size_bytes;
  j["instrumented_size_bytes"] = r.instrumented_size_bytes;
  j["hook_import_index"] = r.hook_import_index;
  return j.dump(2);
}

namespace {

struct Shift {
  std::uint32_t first_defined;  // old index of the first defined function
  std::uint32_t operator()(std::uint32_t f) const { return f >= first_defined ? f + 1 : f; }
};

void shift_expr(ConstExpr& e, const Shift& shift) {
  if (e.kind == ConstExpr::Kind::RefFunc) e.value = shift(static_cast<std::uint32_t>(e.value));
}

void emit_hook(Bytes& out, Reason reason, std::uint32_t hook) {
  out.push_back(op::I32Const);
  put_sleb(out, static_cast<std::int64_t>(reason));
  out.push_back(op::Call);
  put_uleb(out, hook);
}

bool wants_hook(const Instr& in, Policy policy, const InstrumentOptions& opt, std::uint32_t first_defined) {
  switch (policy) {
    case Policy::ImportFunction: return in.code == op::Call && in.a < first_defined;
    case Policy::MemoryInstruction:
      if (is_store(in.code)) return true;
      return opt.hook_bulk_memory &&
             (in.code == op::MemoryFill || in.code == op::MemoryCopy || in.code == op::MemoryInit);
    case Policy::LocalFunction: return false;
  }
  return false;
}

// Rewrites one body. Returns the number of hooks inserted.
std::uint64_t rewrite_body(FunctionBody& body, Policy policy, const InstrumentOptions& opt, const Shift& shift,
                           std::uint32_t hook) {
  const Reason reason = policy_reason(policy);
  Bytes out;
  out.reserve(body.code.size() + 16);
  std::uint64_t sites = 0;
  if (policy == Policy::LocalFunction) {
    emit_hook(out, reason, hook);
    ++sites;
  }
  InstrReader rd(body.code);
  while (!rd.done()) {
    Instr in = rd.next();
    const std::uint8_t* raw = body.code.data() + in.offset;
    if (wants_hook(in, policy, opt, shift.first_defined)) {
      emit_hook(out, reason, hook);
      ++sites;
    }
    if (in.code == op::Call || in.code == op::RefFunc) {
      // Keep the original immediate width so sizes never shrink.
      std::uint32_t idx = shift(in.a);
      unsigned width = static_cast<unsigned>(in.length - 1);
      out.push_back(raw[0]);
      put_uleb_padded(out, idx, std::max(width, uleb_size(idx)));
    } else {
      out.insert(out.end(), raw, raw + in.length);
    }
  }
  body.code = std::move(out);
  return sites;
}

// Shifts function indices in the "name" custom section (function names and
// local names subsections). Unparseable payloads are left untouched.
void shift_name_section(CustomSection& cs, const Shift& shift) {
  try {
    ByteReader r(cs.payload, Errc::MalformedModule);
    Bytes out;
    while (!r.at_end()) {
      std::uint8_t id = r.u8();
      std::uint32_t size = r.u32leb();
      ByteView sub = r.take(size);
      Bytes body;
      if (id == 1 || id == 2) {
        ByteReader s(sub, Errc::MalformedModule);
        std::uint32_t n = s.u32leb();
        put_uleb(body, n);
        for (std::uint32_t i = 0; i < n; ++i) {
          put_uleb(body, shift(s.u32leb()));
          if (id == 1) {
            put_name(body, s.name());
          } else {
            std::uint32_t m = s.u32leb();
            put_uleb(body, m);
            for (std::uint32_t k = 0; k < m; ++k) {
              put_uleb(body, s.u32leb());
              put_name(body, s.name());
            }
          }
        }
        if (!s.at_end()) return;
      } else {
        body.assign(sub.begin(), sub.end());
      }
      out.push_back(id);
      put_uleb(out, body.size());
      put_bytes(out, body);
    }
    cs.payload = std::move(out);
  } catch (const Error&) {
  }
}

}  // namespace

InstrumentResult instrument(ByteView module_bytes, Policy policy, const InstrumentOptions& options) {
  Module m;
  try {
    m = decode(module_bytes);
  } catch (const Error& e) {
    throw Error(Errc::MalformedModule, e.what());
  }
  if (m.num_memories() > 1) throw Error(Errc::MultiMemory, "module declares " + std::to_string(m.num_memories()) + " memories");
  try {
    validate(m);
  } catch (const Error& e) {
    throw Error(Errc::MalformedModule, e.what());
  }
  for (const auto& im : m.imports)
    if (im.kind == ExternKind::Func && im.module == kHookModule && im.name == kHookName)
      throw Error(Errc::AlreadyInstrumented, "module already imports lma.snapshot");

  const std::uint32_t first_defined = m.num_imported(ExternKind::Func);
  const Shift shift{first_defined};
  const std::uint32_t hook = first_defined;

  FuncType hook_type{{ValType::I32}, {}};
  std::uint32_t type_index = 0;
  while (type_index < m.types.size() && !(m.types[type_index] == hook_type)) ++type_index;
  if (type_index == m.types.size()) m.types.push_back(hook_type);

  // Function imports precede definitions in the index space, so appending
  // the hook after every existing import gives it index `first_defined`.
  Import hook_import;
  hook_import.module = std::string(kHookModule);
  hook_import.name = std::string(kHookName);
  hook_import.kind = ExternKind::Func;
  hook_import.func_type = type_index;
  m.imports.push_back(std::move(hook_import));

  InstrumentationReport rep;
  rep.policy = policy;
  rep.hook_import_index = hook;
  rep.original_size_bytes = module_bytes.size();

  for (auto& body : m.codes) {
    std::uint64_t n = rewrite_body(body, policy, options, shift, hook);
    rep.sites_instrumented += n;
    if (n) ++rep.functions_touched;
  }
  for (auto& g : m.globals) shift_expr(g.init, shift);
  for (auto& e : m.exports)
    if (e.kind == ExternKind::Func) e.index = shift(e.index);
  if (m.start) m.start = shift(*m.start);
  for (auto& seg : m.elems) {
    for (auto& f : seg.funcs) f = shift(f);
    for (auto& e : seg.exprs) shift_expr(e, shift);
  }
  for (auto& cs : m.customs)
    if (cs.name == "name") shift_name_section(cs, shift);

  InstrumentResult res;
  res.wasm = encode(m);
  rep.instrumented_size_bytes = res.wasm.size();
  res.report = rep;
  return res;
}

}  // namespace lma
