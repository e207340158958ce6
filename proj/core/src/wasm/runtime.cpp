#include "lma/wasm/runtime.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

#include "lma/wasm/opcodes.hpp"

namespace lma::wasm {

namespace detail {

struct Op {
  std::uint16_t code = 0;
  std::uint32_t a = 0;
  std::uint64_t b = 0;
};

struct BranchTarget {
  std::uint32_t pc = 0;
  std::uint32_t height = 0;
  std::uint32_t arity = 0;
};

struct CompiledFunc {
  std::uint32_t num_params = 0;
  std::uint32_t num_results = 0;
  std::uint32_t num_locals = 0;  // declared locals, params excluded
  std::uint32_t max_height = 0;
  std::vector<Op> code;
  std::vector<BranchTarget> branches;
};

struct CompiledModule {
  std::vector<CompiledFunc> funcs;
};

}  // namespace detail

namespace {

using detail::BranchTarget;
using detail::CompiledFunc;
using detail::Op;

// Internal unconditional jump, reusing the `else` opcode slot.
constexpr std::uint16_t kJump = op::Else;

struct Frame {
  std::uint16_t kind = op::Block;
  std::uint32_t height = 0;
  std::uint32_t nparams = 0;
  std::uint32_t nresults = 0;
  std::uint32_t start_pc = 0;
  std::vector<std::uint32_t> branch_fixups;
  std::vector<std::uint32_t> jump_fixups;
  std::int64_t if_op = -1;
  bool dead = false;
  bool unreachable = false;
  bool has_else = false;
};

// Translates a validated body into register-free stack code with every
// branch resolved to (target pc, stack height, arity).
CompiledFunc compile(const Module& m, std::uint32_t func_index, const FunctionBody& body) {
  CompiledFunc f;
  const FuncType& ft = m.func_type(func_index);
  f.num_params = static_cast<std::uint32_t>(ft.params.size());
  f.num_results = static_cast<std::uint32_t>(ft.results.size());
  for (const auto& d : body.locals) f.num_locals += d.count;

  std::vector<Frame> frames;
  Frame outer;
  outer.nresults = f.num_results;
  frames.push_back(std::move(outer));
  std::int64_t h = 0;
  std::int64_t max_h = 0;
  auto adjust = [&](std::int64_t delta) {
    h += delta;
    max_h = std::max(max_h, h);
  };
  auto emit = [&](std::uint16_t code, std::uint32_t a = 0, std::uint64_t b = 0) {
    f.code.push_back(Op{code, a, b});
    return static_cast<std::uint32_t>(f.code.size() - 1);
  };
  auto branch_to = [&](std::uint32_t depth) {
    Frame& t = frames[frames.size() - 1 - depth];
    BranchTarget bt{0, t.height, t.kind == op::Loop ? t.nparams : t.nresults};
    const auto idx = static_cast<std::uint32_t>(f.branches.size());
    if (t.kind == op::Loop) {
      bt.pc = t.start_pc;
    } else {
      t.branch_fixups.push_back(idx);
    }
    f.branches.push_back(bt);
    return idx;
  };
  auto block_arity = [&](const BlockType& bt, std::uint32_t& np, std::uint32_t& nr) {
    np = nr = 0;
    if (bt.kind == BlockType::Kind::Value) nr = 1;
    if (bt.kind == BlockType::Kind::Index) {
      np = static_cast<std::uint32_t>(m.types[bt.index].params.size());
      nr = static_cast<std::uint32_t>(m.types[bt.index].results.size());
    }
  };
  auto set_unreachable = [&] { frames.back().unreachable = true; };

  InstrReader reader(body.code);
  while (!reader.done()) {
    Instr in = reader.next();
    Frame& cur = frames.back();
    if (cur.dead || cur.unreachable) {
      if (in.code == op::Block || in.code == op::Loop || in.code == op::If) {
        Frame d;
        d.dead = true;
        frames.push_back(d);
        continue;
      }
      if (in.code == op::Else && cur.dead) continue;
      if (in.code == op::End && cur.dead) {
        frames.pop_back();
        continue;
      }
      if (in.code != op::Else && in.code != op::End) continue;
    }

    NumericSig sig;
    if (numeric_sig(in.code, sig)) {
      emit(in.code);
      adjust(1 - static_cast<std::int64_t>(sig.arity));
      continue;
    }
    if (is_load(in.code)) {
      emit(in.code, 0, in.imm);
      continue;
    }
    if (is_store(in.code)) {
      emit(in.code, 0, in.imm);
      adjust(-2);
      continue;
    }
    switch (in.code) {
      case op::Unreachable:
        emit(op::Unreachable);
        set_unreachable();
        break;
      case op::Nop:
        break;
      case op::Block:
      case op::Loop:
      case op::If: {
        Frame fr;
        fr.kind = in.code;
        block_arity(in.block, fr.nparams, fr.nresults);
        if (in.code == op::If) {
          adjust(-1);
          fr.if_op = emit(op::If);
        }
        fr.height = static_cast<std::uint32_t>(h - fr.nparams);
        fr.start_pc = static_cast<std::uint32_t>(f.code.size());
        frames.push_back(std::move(fr));
        break;
      }
      case op::Else: {
        Frame& fr = frames.back();
        if (!fr.unreachable) fr.jump_fixups.push_back(emit(kJump));
        f.code[fr.if_op].a = static_cast<std::uint32_t>(f.code.size());
        fr.has_else = true;
        fr.unreachable = false;
        h = fr.height + fr.nparams;
        break;
      }
      case op::End: {
        Frame& fr = frames.back();
        if (frames.size() == 1) {
          const auto ret = emit(op::Return);
          for (auto i : fr.branch_fixups) f.branches[i].pc = ret;
          frames.pop_back();
          break;
        }
        const auto here = static_cast<std::uint32_t>(f.code.size());
        for (auto i : fr.branch_fixups) f.branches[i].pc = here;
        for (auto j : fr.jump_fixups) f.code[j].a = here;
        if (fr.kind == op::If && !fr.has_else) f.code[fr.if_op].a = here;
        h = fr.height + fr.nresults;
        max_h = std::max(max_h, h);
        frames.pop_back();
        break;
      }
      case op::Br:
        emit(op::Br, branch_to(in.a));
        set_unreachable();
        break;
      case op::BrIf:
        adjust(-1);
        emit(op::BrIf, branch_to(in.a));
        break;
      case op::BrTable: {
        adjust(-1);
        const auto first = static_cast<std::uint32_t>(f.branches.size());
        for (auto t : in.targets) branch_to(t);
        emit(op::BrTable, first, in.targets.size());
        set_unreachable();
        break;
      }
      case op::Return:
        emit(op::Return);
        set_unreachable();
        break;
      case op::Call: {
        const FuncType& callee = m.func_type(in.a);
        emit(op::Call, in.a);
        adjust(static_cast<std::int64_t>(callee.results.size()) - static_cast<std::int64_t>(callee.params.size()));
        break;
      }
      case op::CallIndirect: {
        const FuncType& callee = m.types[in.a];
        emit(op::CallIndirect, in.a, in.b);
        adjust(static_cast<std::int64_t>(callee.results.size()) - static_cast<std::int64_t>(callee.params.size()) - 1);
        break;
      }
      case op::Drop:
        emit(op::Drop);
        adjust(-1);
        break;
      case op::Select:
      case op::SelectT:
        emit(op::Select);
        adjust(-2);
        break;
      case op::LocalGet:
        emit(op::LocalGet, in.a);
        adjust(1);
        break;
      case op::LocalSet:
        emit(op::LocalSet, in.a);
        adjust(-1);
        break;
      case op::LocalTee:
        emit(op::LocalTee, in.a);
        break;
      case op::GlobalGet:
        emit(op::GlobalGet, in.a);
        adjust(1);
        break;
      case op::GlobalSet:
        emit(op::GlobalSet, in.a);
        adjust(-1);
        break;
      case op::MemorySize:
        emit(op::MemorySize);
        adjust(1);
        break;
      case op::MemoryGrow:
        emit(op::MemoryGrow);
        break;
      case op::I32Const:
      case op::I64Const:
      case op::F32Const:
      case op::F64Const:
        emit(in.code, 0, in.imm);
        adjust(1);
        break;
      case op::MemoryInit:
      case op::TableInit:
      case op::TableCopy:
        emit(in.code, in.a, in.b);
        adjust(-3);
        break;
      case op::MemoryCopy:
      case op::MemoryFill:
        emit(in.code);
        adjust(-3);
        break;
      case op::DataDrop:
      case op::ElemDrop:
        emit(in.code, in.a);
        break;
      default:
        throw Error(Errc::MalformedModule, std::string("cannot compile ") + opcode_name(in.code));
    }
  }
  f.max_height = static_cast<std::uint32_t>(max_h);
  return f;
}

template <typename F>
F wasm_min(F a, F b) {
  if (std::isnan(a) || std::isnan(b)) return std::numeric_limits<F>::quiet_NaN();
  if (a == b) return std::signbit(a) ? a : b;
  return a < b ? a : b;
}

template <typename F>
F wasm_max(F a, F b) {
  if (std::isnan(a) || std::isnan(b)) return std::numeric_limits<F>::quiet_NaN();
  if (a == b) return std::signbit(a) ? b : a;
  return a > b ? a : b;
}

template <typename I, typename F>
I trunc_checked(F x) {
  if (std::isnan(x)) throw Trap("invalid conversion to integer");
  const F t = std::trunc(x);
  constexpr int bits = std::numeric_limits<I>::digits;  // 31/63 signed, 32/64 unsigned
  const F upper = std::ldexp(F(1), bits);
  const F lower = std::is_signed_v<I> ? -upper : F(0);
  if (!(t >= lower && t < upper)) throw Trap("integer overflow");
  return static_cast<I>(t);
}

template <typename I, typename F>
I trunc_sat(F x) {
  if (std::isnan(x)) return 0;
  const F t = std::trunc(x);
  constexpr int bits = std::numeric_limits<I>::digits;
  const F upper = std::ldexp(F(1), bits);
  const F lower = std::is_signed_v<I> ? -upper : F(0);
  if (t < lower) return std::numeric_limits<I>::min();
  if (t >= upper) return std::numeric_limits<I>::max();
  return static_cast<I>(t);
}

inline float as_f32(std::uint64_t v) { return std::bit_cast<float>(static_cast<std::uint32_t>(v)); }
inline double as_f64(std::uint64_t v) { return std::bit_cast<double>(v); }
inline std::uint64_t from_f32(float f) { return std::bit_cast<std::uint32_t>(f); }
inline std::uint64_t from_f64(double d) { return std::bit_cast<std::uint64_t>(d); }

std::uint64_t eval_const(const ConstExpr& e, const std::vector<std::uint64_t>& globals) {
  switch (e.kind) {
    case ConstExpr::Kind::GlobalGet: return globals.at(e.value);
    case ConstExpr::Kind::RefNull: return std::numeric_limits<std::uint32_t>::max();
    default: return e.value;
  }
}

constexpr std::uint32_t kNullRef = std::numeric_limits<std::uint32_t>::max();

}  // namespace

void Linker::define(const std::string& module, const std::string& name, FuncType type, HostFn fn) {
  funcs_[{module, name}] = HostFunction{std::move(type), std::move(fn)};
}

void Linker::define_global(const std::string& module, const std::string& name, std::uint64_t value) {
  globals_[{module, name}] = value;
}

const HostFunction* Linker::find(const std::string& module, const std::string& name) const {
  auto it = funcs_.find({module, name});
  return it == funcs_.end() ? nullptr : &it->second;
}

const std::uint64_t* Linker::find_global(const std::string& module, const std::string& name) const {
  auto it = globals_.find({module, name});
  return it == globals_.end() ? nullptr : &it->second;
}

Instance::Instance(Module module, InstanceOptions options)
    : module_(std::move(module)), options_(options), compiled_(std::make_unique<detail::CompiledModule>()) {}

Instance::~Instance() = default;

std::unique_ptr<Instance> Instance::instantiate(const Module& module, const Linker& linker, InstanceOptions options) {
  std::unique_ptr<Instance> inst(new Instance(module, options));
  const Module& m = inst->module_;

  for (const auto& im : m.imports) {
    switch (im.kind) {
      case ExternKind::Func: {
        const HostFunction* hf = linker.find(im.module, im.name);
        if (!hf) throw Error(Errc::LinkError, "unresolved import " + im.module + "." + im.name);
        if (!(hf->type == m.types[im.func_type])) {
          throw Error(Errc::LinkError, "signature mismatch for import " + im.module + "." + im.name);
        }
        inst->host_funcs_.push_back(*hf);
        break;
      }
      case ExternKind::Global: {
        const std::uint64_t* v = linker.find_global(im.module, im.name);
        if (!v) throw Error(Errc::LinkError, "unresolved global import " + im.module + "." + im.name);
        inst->globals_.push_back(*v);
        break;
      }
      case ExternKind::Memory:
      case ExternKind::Table:
        // Imported memories and tables are provisioned fresh by the embedder.
        break;
    }
  }
  for (const auto& g : m.globals) inst->globals_.push_back(eval_const(g.init, inst->globals_));

  if (m.num_memories() > 0) {
    const Limits l = m.memory_limits(0);
    inst->has_memory_ = true;
    inst->memory_max_pages_ = std::min<std::uint32_t>(l.max.value_or(kMaxPages), options.max_memory_pages);
    if (l.min > inst->memory_max_pages_) throw Error(Errc::LinkError, "initial memory exceeds instance limit");
    inst->memory_.assign(static_cast<std::size_t>(l.min) * kPageSize, 0);
  }
  for (std::uint32_t t = 0; t < m.num_tables(); ++t) {
    inst->tables_.emplace_back(m.table_type(t).limits.min, kNullRef);
  }

  const std::uint32_t imported = m.num_imported(ExternKind::Func);
  inst->compiled_->funcs.reserve(m.codes.size());
  for (std::size_t i = 0; i < m.codes.size(); ++i) {
    inst->compiled_->funcs.push_back(compile(m, imported + static_cast<std::uint32_t>(i), m.codes[i]));
  }
  inst->stack_.assign(options.stack_slots, 0);
  inst->fuel_ = options.fuel;

  inst->elem_dropped_.assign(m.elems.size(), false);
  for (std::size_t i = 0; i < m.elems.size(); ++i) {
    const auto& s = m.elems[i];
    if (s.mode != ElemSegment::Mode::Active) {
      if (s.mode == ElemSegment::Mode::Declarative) inst->elem_dropped_[i] = true;
      continue;
    }
    const auto offset = static_cast<std::uint32_t>(eval_const(s.offset, inst->globals_));
    auto& table = inst->tables_.at(s.table);
    if (static_cast<std::uint64_t>(offset) + s.size() > table.size()) throw Trap("out of bounds table access");
    for (std::size_t k = 0; k < s.size(); ++k) {
      table[offset + k] = s.uses_exprs() ? static_cast<std::uint32_t>(eval_const(s.exprs[k], inst->globals_)) : s.funcs[k];
    }
    inst->elem_dropped_[i] = true;
  }
  inst->data_dropped_.assign(m.datas.size(), false);
  for (std::size_t i = 0; i < m.datas.size(); ++i) {
    const auto& d = m.datas[i];
    if (d.mode != DataSegment::Mode::Active) continue;
    const auto offset = static_cast<std::uint32_t>(eval_const(d.offset, inst->globals_));
    if (static_cast<std::uint64_t>(offset) + d.bytes.size() > inst->memory_.size()) {
      throw Trap("out of bounds memory access");
    }
    std::copy(d.bytes.begin(), d.bytes.end(), inst->memory_.begin() + offset);
    inst->data_dropped_[i] = true;
  }

  if (m.start) inst->call(*m.start);
  return inst;
}

std::vector<std::uint64_t> Instance::call(std::string_view export_name, std::span<const std::uint64_t> args) {
  auto idx = module_.find_export(std::string(export_name), ExternKind::Func);
  if (!idx) throw Error(Errc::LinkError, "no exported function " + std::string(export_name));
  return call(*idx, args);
}

std::vector<std::uint64_t> Instance::call(std::uint32_t func_index, std::span<const std::uint64_t> args) {
  const FuncType& ft = module_.func_type(func_index);
  if (args.size() != ft.params.size()) throw Error(Errc::InvalidArgument, "argument count mismatch");
  std::uint64_t* sp = stack_.data();
  std::copy(args.begin(), args.end(), sp);
  sp += args.size();
  std::uint64_t* end = invoke(func_index, sp, 0);
  return std::vector<std::uint64_t>(end - ft.results.size(), end);
}

std::uint32_t Instance::grow_memory(std::uint32_t delta) {
  const std::uint32_t old = memory_pages();
  if (!has_memory_ || static_cast<std::uint64_t>(old) + delta > memory_max_pages_) return 0xFFFFFFFFu;
  memory_.resize(static_cast<std::size_t>(old + delta) * kPageSize, 0);
  return old;
}

std::uint64_t* Instance::invoke(std::uint32_t func_index, std::uint64_t* sp, std::uint32_t depth) {
  if (depth >= options_.max_call_depth) throw Trap("call stack exhausted");
  if (func_index < host_funcs_.size()) {
    const HostFunction& hf = host_funcs_[func_index];
    const std::size_t np = hf.type.params.size();
    const std::size_t nr = hf.type.results.size();
    std::uint64_t results[8] = {};
    if (nr > 8) throw Trap("too many host results");
    std::uint64_t* args = sp - np;
    hf.fn(*this, std::span<const std::uint64_t>(args, np), std::span<std::uint64_t>(results, nr));
    std::copy(results, results + nr, args);
    return args + nr;
  }
  return execute(func_index - static_cast<std::uint32_t>(host_funcs_.size()), sp, depth);
}

std::uint64_t* Instance::execute(std::uint32_t local_index, std::uint64_t* sp, std::uint32_t depth) {
  const CompiledFunc& f = compiled_->funcs[local_index];
  std::uint64_t* const fp = sp - f.num_params;
  if (sp + f.num_locals + f.max_height + 16 > stack_.data() + stack_.size()) throw Trap("call stack exhausted");
  std::fill(sp, sp + f.num_locals, 0);
  std::uint64_t* const base = sp + f.num_locals;
  sp = base;
  const Op* const code = f.code.data();
  const BranchTarget* const branches = f.branches.data();
  std::uint8_t* mem = memory_.data();
  std::uint64_t mem_size = memory_.size();
  const bool metered = options_.fuel != 0;
  std::size_t pc = 0;

#define POP() (*--sp)
#define PUSH(v) (*sp++ = (v))
#define TOP() (sp[-1])
#define CONSUME_FUEL() \
  if (metered && fuel_-- == 0) throw Trap("fuel exhausted")
#define TAKE_BRANCH(idx)                                                       \
  do {                                                                         \
    const BranchTarget& bt_ = branches[(idx)];                                 \
    std::uint64_t* dst_ = base + bt_.height;                                   \
    if (bt_.arity && dst_ != sp - bt_.arity) std::memmove(dst_, sp - bt_.arity, bt_.arity * sizeof(std::uint64_t)); \
    sp = dst_ + bt_.arity;                                                     \
    pc = bt_.pc;                                                               \
    CONSUME_FUEL();                                                            \
  } while (0)
#define EA(width) \
  ([&]() -> std::uint8_t* { \
    const std::uint64_t ea_ = static_cast<std::uint32_t>(POP()) + o.b; \
    if (ea_ + (width) > mem_size) throw Trap("out of bounds memory access"); \
    return mem + ea_; \
  }())
#define LOAD(T, conv)                  \
  {                                    \
    std::uint8_t* p_ = EA(sizeof(T));  \
    T v_;                              \
    std::memcpy(&v_, p_, sizeof(T));   \
    PUSH(conv);                        \
  }                                    \
  break
#define STORE(T)                                  \
  {                                               \
    const std::uint64_t val_ = POP();             \
    std::uint8_t* p_ = EA(sizeof(T));             \
    const T v_ = static_cast<T>(val_);            \
    std::memcpy(p_, &v_, sizeof(T));              \
  }                                               \
  break
#define I32_BIN(expr)                                      \
  {                                                        \
    const std::uint32_t b = static_cast<std::uint32_t>(POP()); \
    const std::uint32_t a = static_cast<std::uint32_t>(TOP()); \
    TOP() = static_cast<std::uint32_t>(expr);              \
  }                                                        \
  break
#define I64_BIN(expr)                     \
  {                                       \
    const std::uint64_t b = POP();        \
    const std::uint64_t a = TOP();        \
    TOP() = static_cast<std::uint64_t>(expr); \
  }                                       \
  break
#define F32_BIN(expr)                      \
  {                                        \
    const float b = as_f32(POP());         \
    const float a = as_f32(TOP());         \
    TOP() = from_f32(expr);                \
  }                                        \
  break
#define F64_BIN(expr)                      \
  {                                        \
    const double b = as_f64(POP());        \
    const double a = as_f64(TOP());        \
    TOP() = from_f64(expr);                \
  }                                        \
  break
#define F32_CMP(expr)                      \
  {                                        \
    const float b = as_f32(POP());         \
    const float a = as_f32(TOP());         \
    TOP() = (expr) ? 1u : 0u;              \
  }                                        \
  break
#define F64_CMP(expr)                      \
  {                                        \
    const double b = as_f64(POP());        \
    const double a = as_f64(TOP());        \
    TOP() = (expr) ? 1u : 0u;              \
  }                                        \
  break
#define UNARY(expr)      \
  {                      \
    const std::uint64_t a = TOP(); \
    TOP() = (expr);      \
  }                      \
  break

  using i32 = std::int32_t;
  using u32 = std::uint32_t;
  using i64 = std::int64_t;
  using u64 = std::uint64_t;

  for (;;) {
    const Op& o = code[pc++];
    switch (o.code) {
      case op::Unreachable:
        throw Trap("unreachable executed");
      case kJump:
        pc = o.a;
        break;
      case op::If:
        if (static_cast<u32>(POP()) == 0) pc = o.a;
        break;
      case op::Br:
        TAKE_BRANCH(o.a);
        break;
      case op::BrIf:
        if (static_cast<u32>(POP()) != 0) TAKE_BRANCH(o.a);
        break;
      case op::BrTable: {
        const u32 i = static_cast<u32>(POP());
        const u32 n = static_cast<u32>(o.b);
        TAKE_BRANCH(o.a + std::min(i, n - 1));
        break;
      }
      case op::Return: {
        const u32 nr = f.num_results;
        std::memmove(fp, sp - nr, nr * sizeof(u64));
        return fp + nr;
      }
      case op::Call: {
        CONSUME_FUEL();
        sp = invoke(o.a, sp, depth + 1);
        mem = memory_.data();
        mem_size = memory_.size();
        break;
      }
      case op::CallIndirect: {
        CONSUME_FUEL();
        const u32 i = static_cast<u32>(POP());
        const auto& table = tables_[o.b];
        if (i >= table.size()) throw Trap("undefined element");
        const u32 target = table[i];
        if (target == kNullRef) throw Trap("uninitialized element");
        if (!(module_.func_type(target) == module_.types[o.a])) throw Trap("indirect call type mismatch");
        sp = invoke(target, sp, depth + 1);
        mem = memory_.data();
        mem_size = memory_.size();
        break;
      }
      case op::Drop:
        --sp;
        break;
      case op::Select: {
        const u32 c = static_cast<u32>(POP());
        const u64 b = POP();
        if (!c) TOP() = b;
        break;
      }
      case op::LocalGet:
        PUSH(fp[o.a]);
        break;
      case op::LocalSet:
        fp[o.a] = POP();
        break;
      case op::LocalTee:
        fp[o.a] = TOP();
        break;
      case op::GlobalGet:
        PUSH(globals_[o.a]);
        break;
      case op::GlobalSet:
        globals_[o.a] = POP();
        break;

      case 0x28: LOAD(u32, static_cast<u64>(v_));
      case 0x29: LOAD(u64, v_);
      case 0x2A: LOAD(u32, static_cast<u64>(v_));
      case 0x2B: LOAD(u64, v_);
      case 0x2C: LOAD(std::int8_t, static_cast<u64>(static_cast<u32>(static_cast<i32>(v_))));
      case 0x2D: LOAD(std::uint8_t, static_cast<u64>(v_));
      case 0x2E: LOAD(std::int16_t, static_cast<u64>(static_cast<u32>(static_cast<i32>(v_))));
      case 0x2F: LOAD(std::uint16_t, static_cast<u64>(v_));
      case 0x30: LOAD(std::int8_t, static_cast<u64>(static_cast<i64>(v_)));
      case 0x31: LOAD(std::uint8_t, static_cast<u64>(v_));
      case 0x32: LOAD(std::int16_t, static_cast<u64>(static_cast<i64>(v_)));
      case 0x33: LOAD(std::uint16_t, static_cast<u64>(v_));
      case 0x34: LOAD(std::int32_t, static_cast<u64>(static_cast<i64>(v_)));
      case 0x35: LOAD(std::uint32_t, static_cast<u64>(v_));
      case 0x36: STORE(u32);
      case 0x37: STORE(u64);
      case 0x38: STORE(u32);
      case 0x39: STORE(u64);
      case 0x3A: STORE(std::uint8_t);
      case 0x3B: STORE(std::uint16_t);
      case 0x3C: STORE(std::uint8_t);
      case 0x3D: STORE(std::uint16_t);
      case 0x3E: STORE(u32);

      case op::MemorySize:
        PUSH(memory_pages());
        break;
      case op::MemoryGrow: {
        const u32 delta = static_cast<u32>(TOP());
        TOP() = grow_memory(delta);
        mem = memory_.data();
        mem_size = memory_.size();
        break;
      }
      case op::I32Const:
      case op::I64Const:
      case op::F32Const:
      case op::F64Const:
        PUSH(o.b);
        break;

      case 0x45: UNARY(static_cast<u32>(a) == 0 ? 1u : 0u);
      case 0x46: I32_BIN(a == b);
      case 0x47: I32_BIN(a != b);
      case 0x48: I32_BIN(static_cast<i32>(a) < static_cast<i32>(b));
      case 0x49: I32_BIN(a < b);
      case 0x4A: I32_BIN(static_cast<i32>(a) > static_cast<i32>(b));
      case 0x4B: I32_BIN(a > b);
      case 0x4C: I32_BIN(static_cast<i32>(a) <= static_cast<i32>(b));
      case 0x4D: I32_BIN(a <= b);
      case 0x4E: I32_BIN(static_cast<i32>(a) >= static_cast<i32>(b));
      case 0x4F: I32_BIN(a >= b);
      case 0x50: UNARY(a == 0 ? 1u : 0u);
      case 0x51: I64_BIN(a == b ? 1u : 0u);
      case 0x52: I64_BIN(a != b ? 1u : 0u);
      case 0x53: I64_BIN(static_cast<i64>(a) < static_cast<i64>(b) ? 1u : 0u);
      case 0x54: I64_BIN(a < b ? 1u : 0u);
      case 0x55: I64_BIN(static_cast<i64>(a) > static_cast<i64>(b) ? 1u : 0u);
      case 0x56: I64_BIN(a > b ? 1u : 0u);
      case 0x57: I64_BIN(static_cast<i64>(a) <= static_cast<i64>(b) ? 1u : 0u);
      case 0x58: I64_BIN(a <= b ? 1u : 0u);
      case 0x59: I64_BIN(static_cast<i64>(a) >= static_cast<i64>(b) ? 1u : 0u);
      case 0x5A: I64_BIN(a >= b ? 1u : 0u);
      case 0x5B: F32_CMP(a == b);
      case 0x5C: F32_CMP(a != b);
      case 0x5D: F32_CMP(a < b);
      case 0x5E: F32_CMP(a > b);
      case 0x5F: F32_CMP(a <= b);
      case 0x60: F32_CMP(a >= b);
      case 0x61: F64_CMP(a == b);
      case 0x62: F64_CMP(a != b);
      case 0x63: F64_CMP(a < b);
      case 0x64: F64_CMP(a > b);
      case 0x65: F64_CMP(a <= b);
      case 0x66: F64_CMP(a >= b);

      case 0x67: UNARY(static_cast<u32>(std::countl_zero(static_cast<u32>(a))));
      case 0x68: UNARY(static_cast<u32>(std::countr_zero(static_cast<u32>(a))));
      case 0x69: UNARY(static_cast<u32>(std::popcount(static_cast<u32>(a))));
      case 0x6A: I32_BIN(a + b);
      case 0x6B: I32_BIN(a - b);
      case 0x6C: I32_BIN(a * b);
      case 0x6D: {
        const i32 b = static_cast<i32>(POP());
        const i32 a = static_cast<i32>(TOP());
        if (b == 0) throw Trap("integer divide by zero");
        if (a == std::numeric_limits<i32>::min() && b == -1) throw Trap("integer overflow");
        TOP() = static_cast<u32>(a / b);
        break;
      }
      case 0x6E: {
        const u32 b = static_cast<u32>(POP());
        const u32 a = static_cast<u32>(TOP());
        if (b == 0) throw Trap("integer divide by zero");
        TOP() = a / b;
        break;
      }
      case 0x6F: {
        const i32 b = static_cast<i32>(POP());
        const i32 a = static_cast<i32>(TOP());
        if (b == 0) throw Trap("integer divide by zero");
        TOP() = b == -1 ? 0u : static_cast<u32>(a % b);
        break;
      }
      case 0x70: {
        const u32 b = static_cast<u32>(POP());
        const u32 a = static_cast<u32>(TOP());
        if (b == 0) throw Trap("integer divide by zero");
        TOP() = a % b;
        break;
      }
      case 0x71: I32_BIN(a & b);
      case 0x72: I32_BIN(a | b);
      case 0x73: I32_BIN(a ^ b);
      case 0x74: I32_BIN(a << (b & 31));
      case 0x75: I32_BIN(static_cast<i32>(a) >> (b & 31));
      case 0x76: I32_BIN(a >> (b & 31));
      case 0x77: I32_BIN(std::rotl(a, static_cast<int>(b & 31)));
      case 0x78: I32_BIN(std::rotr(a, static_cast<int>(b & 31)));

      case 0x79: UNARY(static_cast<u64>(std::countl_zero(a)));
      case 0x7A: UNARY(static_cast<u64>(std::countr_zero(a)));
      case 0x7B: UNARY(static_cast<u64>(std::popcount(a)));
      case 0x7C: I64_BIN(a + b);
      case 0x7D: I64_BIN(a - b);
      case 0x7E: I64_BIN(a * b);
      case 0x7F: {
        const i64 b = static_cast<i64>(POP());
        const i64 a = static_cast<i64>(TOP());
        if (b == 0) throw Trap("integer divide by zero");
        if (a == std::numeric_limits<i64>::min() && b == -1) throw Trap("integer overflow");
        TOP() = static_cast<u64>(a / b);
        break;
      }
      case 0x80: {
        const u64 b = POP();
        const u64 a = TOP();
        if (b == 0) throw Trap("integer divide by zero");
        TOP() = a / b;
        break;
      }
      case 0x81: {
        const i64 b = static_cast<i64>(POP());
        const i64 a = static_cast<i64>(TOP());
        if (b == 0) throw Trap("integer divide by zero");
        TOP() = b == -1 ? 0u : static_cast<u64>(a % b);
        break;
      }
      case 0x82: {
        const u64 b = POP();
        const u64 a = TOP();
        if (b == 0) throw Trap("integer divide by zero");
        TOP() = a % b;
        break;
      }
      case 0x83: I64_BIN(a & b);
      case 0x84: I64_BIN(a | b);
      case 0x85: I64_BIN(a ^ b);
      case 0x86: I64_BIN(a << (b & 63));
      case 0x87: I64_BIN(static_cast<i64>(a) >> (b & 63));
      case 0x88: I64_BIN(a >> (b & 63));
      case 0x89: I64_BIN(std::rotl(a, static_cast<int>(b & 63)));
      case 0x8A: I64_BIN(std::rotr(a, static_cast<int>(b & 63)));

      case 0x8B: UNARY(a & 0x7FFFFFFFu);
      case 0x8C: UNARY((a ^ 0x80000000u) & 0xFFFFFFFFu);
      case 0x8D: UNARY(from_f32(std::ceil(as_f32(a))));
      case 0x8E: UNARY(from_f32(std::floor(as_f32(a))));
      case 0x8F: UNARY(from_f32(std::trunc(as_f32(a))));
      case 0x90: UNARY(from_f32(std::nearbyint(as_f32(a))));
      case 0x91: UNARY(from_f32(std::sqrt(as_f32(a))));
      case 0x92: F32_BIN(a + b);
      case 0x93: F32_BIN(a - b);
      case 0x94: F32_BIN(a * b);
      case 0x95: F32_BIN(a / b);
      case 0x96: F32_BIN(wasm_min(a, b));
      case 0x97: F32_BIN(wasm_max(a, b));
      case 0x98: F32_BIN(std::copysign(a, b));

      case 0x99: UNARY(a & 0x7FFFFFFFFFFFFFFFull);
      case 0x9A: UNARY(a ^ 0x8000000000000000ull);
      case 0x9B: UNARY(from_f64(std::ceil(as_f64(a))));
      case 0x9C: UNARY(from_f64(std::floor(as_f64(a))));
      case 0x9D: UNARY(from_f64(std::trunc(as_f64(a))));
      case 0x9E: UNARY(from_f64(std::nearbyint(as_f64(a))));
      case 0x9F: UNARY(from_f64(std::sqrt(as_f64(a))));
      case 0xA0: F64_BIN(a + b);
      case 0xA1: F64_BIN(a - b);
      case 0xA2: F64_BIN(a * b);
      case 0xA3: F64_BIN(a / b);
      case 0xA4: F64_BIN(wasm_min(a, b));
      case 0xA5: F64_BIN(wasm_max(a, b));
      case 0xA6: F64_BIN(std::copysign(a, b));

      case 0xA7: UNARY(a & 0xFFFFFFFFu);
      case 0xA8: UNARY(static_cast<u32>(trunc_checked<i32>(as_f32(a))));
      case 0xA9: UNARY(trunc_checked<u32>(as_f32(a)));
      case 0xAA: UNARY(static_cast<u32>(trunc_checked<i32>(as_f64(a))));
      case 0xAB: UNARY(trunc_checked<u32>(as_f64(a)));
      case 0xAC: UNARY(static_cast<u64>(static_cast<i64>(static_cast<i32>(a))));
      case 0xAD: UNARY(a & 0xFFFFFFFFu);
      case 0xAE: UNARY(static_cast<u64>(trunc_checked<i64>(as_f32(a))));
      case 0xAF: UNARY(trunc_checked<u64>(as_f32(a)));
      case 0xB0: UNARY(static_cast<u64>(trunc_checked<i64>(as_f64(a))));
      case 0xB1: UNARY(trunc_checked<u64>(as_f64(a)));
      case 0xB2: UNARY(from_f32(static_cast<float>(static_cast<i32>(a))));
      case 0xB3: UNARY(from_f32(static_cast<float>(static_cast<u32>(a))));
      case 0xB4: UNARY(from_f32(static_cast<float>(static_cast<i64>(a))));
      case 0xB5: UNARY(from_f32(static_cast<float>(a)));
      case 0xB6: UNARY(from_f32(static_cast<float>(as_f64(a))));
      case 0xB7: UNARY(from_f64(static_cast<double>(static_cast<i32>(a))));
      case 0xB8: UNARY(from_f64(static_cast<double>(static_cast<u32>(a))));
      case 0xB9: UNARY(from_f64(static_cast<double>(static_cast<i64>(a))));
      case 0xBA: UNARY(from_f64(static_cast<double>(a)));
      case 0xBB: UNARY(from_f64(static_cast<double>(as_f32(a))));
      case 0xBC:
      case 0xBD:
      case 0xBE:
      case 0xBF:
        break;  // reinterpretations are bit-preserving
      case 0xC0: UNARY(static_cast<u32>(static_cast<i32>(static_cast<std::int8_t>(a))));
      case 0xC1: UNARY(static_cast<u32>(static_cast<i32>(static_cast<std::int16_t>(a))));
      case 0xC2: UNARY(static_cast<u64>(static_cast<i64>(static_cast<std::int8_t>(a))));
      case 0xC3: UNARY(static_cast<u64>(static_cast<i64>(static_cast<std::int16_t>(a))));
      case 0xC4: UNARY(static_cast<u64>(static_cast<i64>(static_cast<i32>(a))));

      case 0xFC00: UNARY(static_cast<u32>(trunc_sat<i32>(as_f32(a))));
      case 0xFC01: UNARY(trunc_sat<u32>(as_f32(a)));
      case 0xFC02: UNARY(static_cast<u32>(trunc_sat<i32>(as_f64(a))));
      case 0xFC03: UNARY(trunc_sat<u32>(as_f64(a)));
      case 0xFC04: UNARY(static_cast<u64>(trunc_sat<i64>(as_f32(a))));
      case 0xFC05: UNARY(trunc_sat<u64>(as_f32(a)));
      case 0xFC06: UNARY(static_cast<u64>(trunc_sat<i64>(as_f64(a))));
      case 0xFC07: UNARY(trunc_sat<u64>(as_f64(a)));

      case op::MemoryInit: {
        const u64 n = static_cast<u32>(POP());
        const u64 s = static_cast<u32>(POP());
        const u64 d = static_cast<u32>(POP());
        const auto& seg = module_.datas[o.a].bytes;
        const u64 seg_len = data_dropped_[o.a] ? 0 : seg.size();
        if (s + n > seg_len || d + n > mem_size) throw Trap("out of bounds memory access");
        if (n) std::memcpy(mem + d, seg.data() + s, n);
        break;
      }
      case op::DataDrop:
        data_dropped_[o.a] = true;
        break;
      case op::MemoryCopy: {
        const u64 n = static_cast<u32>(POP());
        const u64 s = static_cast<u32>(POP());
        const u64 d = static_cast<u32>(POP());
        if (s + n > mem_size || d + n > mem_size) throw Trap("out of bounds memory access");
        if (n) std::memmove(mem + d, mem + s, n);
        break;
      }
      case op::MemoryFill: {
        const u64 n = static_cast<u32>(POP());
        const u32 v = static_cast<u32>(POP());
        const u64 d = static_cast<u32>(POP());
        if (d + n > mem_size) throw Trap("out of bounds memory access");
        if (n) std::memset(mem + d, static_cast<int>(v & 0xFF), n);
        break;
      }
      case op::TableInit: {
        const u64 n = static_cast<u32>(POP());
        const u64 s = static_cast<u32>(POP());
        const u64 d = static_cast<u32>(POP());
        const auto& seg = module_.elems[o.a];
        auto& table = tables_[static_cast<std::size_t>(o.b)];
        const u64 seg_len = elem_dropped_[o.a] ? 0 : seg.size();
        if (s + n > seg_len || d + n > table.size()) throw Trap("out of bounds table access");
        for (u64 k = 0; k < n; ++k) {
          table[d + k] = seg.uses_exprs() ? static_cast<u32>(eval_const(seg.exprs[s + k], globals_)) : seg.funcs[s + k];
        }
        break;
      }
      case op::ElemDrop:
        elem_dropped_[o.a] = true;
        break;
      case op::TableCopy: {
        const u64 n = static_cast<u32>(POP());
        const u64 s = static_cast<u32>(POP());
        const u64 d = static_cast<u32>(POP());
        auto& dst = tables_[o.a];
        auto& src = tables_[static_cast<std::size_t>(o.b)];
        if (s + n > src.size() || d + n > dst.size()) throw Trap("out of bounds table access");
        std::vector<u32> tmp(src.begin() + static_cast<std::ptrdiff_t>(s), src.begin() + static_cast<std::ptrdiff_t>(s + n));
        std::copy(tmp.begin(), tmp.end(), dst.begin() + static_cast<std::ptrdiff_t>(d));
        break;
      }
      default:
        throw Trap("invalid internal opcode");
    }
  }

#undef POP
#undef PUSH
#undef TOP
#undef CONSUME_FUEL
#undef TAKE_BRANCH
#undef EA
#undef LOAD
#undef STORE
#undef I32_BIN
#undef I64_BIN
#undef F32_BIN
#undef F64_BIN
#undef F32_CMP
#undef F64_CMP
#undef UNARY
}

}  // namespace lma::wasm
