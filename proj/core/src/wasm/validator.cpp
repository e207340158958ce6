#include "lma/wasm/validator.hpp"

#include <set>
#include <string>

#include "lma/wasm/opcodes.hpp"

namespace lma::wasm {

namespace {

[[noreturn]] void invalid(const std::string& why) { throw Error(Errc::MalformedModule, why); }

constexpr std::uint8_t kUnknown = 0;
constexpr std::uint8_t kI32 = 0x7F, kI64 = 0x7E, kF32 = 0x7D, kF64 = 0x7C;

bool is_num(std::uint8_t t) { return t == kI32 || t == kI64 || t == kF32 || t == kF64; }

struct Ctrl {
  std::uint16_t opcode;
  std::vector<std::uint8_t> start_types;
  std::vector<std::uint8_t> end_types;
  std::size_t height;
  bool unreachable = false;
};

class FunctionValidator {
 public:
  FunctionValidator(const Module& m, std::uint32_t func_index, const FunctionBody& body)
      : m_(m), func_index_(func_index), body_(body) {
    const FuncType& ft = m.func_type(func_index);
    for (auto p : ft.params) locals_.push_back(static_cast<std::uint8_t>(p));
    for (const auto& d : body.locals) {
      if (d.type == ValType::FuncRef || d.type == ValType::ExternRef) {
        fail("reference-typed locals are not supported");
      }
      locals_.insert(locals_.end(), d.count, static_cast<std::uint8_t>(d.type));
    }
    for (auto r : ft.results) results_.push_back(static_cast<std::uint8_t>(r));
  }

  void run() {
    push_ctrl(op::Block, {}, results_);
    InstrReader reader(body_.code);
    while (!reader.done()) {
      if (ctrls_.empty()) fail("instructions after function end");
      Instr in = reader.next();
      offset_ = in.offset;
      step(in);
    }
    if (!ctrls_.empty()) fail("function body not terminated");
  }

 private:
  [[noreturn]] void fail(const std::string& why) const {
    invalid("function " + std::to_string(func_index_) + " at body offset " + std::to_string(offset_) +
            ": " + why);
  }

  void push_val(std::uint8_t t) { vals_.push_back(t); }

  std::uint8_t pop_val() {
    if (vals_.size() == ctrls_.back().height) {
      if (ctrls_.back().unreachable) return kUnknown;
      fail("operand stack underflow");
    }
    auto t = vals_.back();
    vals_.pop_back();
    return t;
  }

  std::uint8_t pop_val(std::uint8_t expect) {
    auto actual = pop_val();
    if (actual != expect && actual != kUnknown && expect != kUnknown) {
      fail(std::string("type mismatch: expected ") + to_string(static_cast<ValType>(expect)) + " got " +
           to_string(static_cast<ValType>(actual)));
    }
    return actual == kUnknown ? expect : actual;
  }

  void push_vals(const std::vector<std::uint8_t>& ts) {
    for (auto t : ts) push_val(t);
  }

  void pop_vals(const std::vector<std::uint8_t>& ts) {
    for (auto it = ts.rbegin(); it != ts.rend(); ++it) pop_val(*it);
  }

  void push_ctrl(std::uint16_t opcode, std::vector<std::uint8_t> in, std::vector<std::uint8_t> out) {
    ctrls_.push_back(Ctrl{opcode, in, std::move(out), vals_.size(), false});
    push_vals(in);
  }

  Ctrl pop_ctrl() {
    if (ctrls_.empty()) fail("control stack underflow");
    const Ctrl& c = ctrls_.back();
    pop_vals(c.end_types);
    if (vals_.size() != c.height) fail("values remaining on stack at end of block");
    Ctrl out = c;
    ctrls_.pop_back();
    return out;
  }

  const std::vector<std::uint8_t>& label_types(const Ctrl& c) const {
    return c.opcode == op::Loop ? c.start_types : c.end_types;
  }

  void set_unreachable() {
    vals_.resize(ctrls_.back().height);
    ctrls_.back().unreachable = true;
  }

  const Ctrl& label(std::uint32_t depth) {
    if (depth >= ctrls_.size()) fail("branch depth out of range");
    return ctrls_[ctrls_.size() - 1 - depth];
  }

  void block_signature(const BlockType& bt, std::vector<std::uint8_t>& in, std::vector<std::uint8_t>& out) {
    switch (bt.kind) {
      case BlockType::Kind::Empty: break;
      case BlockType::Kind::Value:
        if (!is_num(bt.value)) fail("invalid block value type");
        out.push_back(bt.value);
        break;
      case BlockType::Kind::Index: {
        if (bt.index >= m_.types.size()) fail("block type index out of range");
        const auto& ft = m_.types[bt.index];
        for (auto p : ft.params) in.push_back(static_cast<std::uint8_t>(p));
        for (auto r : ft.results) out.push_back(static_cast<std::uint8_t>(r));
        break;
      }
    }
  }

  void require_memory() {
    if (m_.num_memories() == 0) fail("memory instruction without a memory");
  }

  void require_data_count() {
    if (!m_.data_count) fail("data count section required");
  }

  void step(const Instr& in) {
    NumericSig sig;
    if (numeric_sig(in.code, sig)) {
      if (sig.arity == 2) pop_val(sig.in);
      pop_val(sig.in);
      push_val(sig.out);
      return;
    }
    if (is_load(in.code)) {
      require_memory();
      if (in.a > natural_alignment(in.code)) fail("alignment larger than natural");
      pop_val(kI32);
      static constexpr std::uint8_t kLoadType[] = {kI32, kI64, kF32, kF64, kI32, kI32, kI32,
                                                    kI32, kI64, kI64, kI64, kI64, kI64, kI64};
      push_val(kLoadType[in.code - op::I32Load]);
      return;
    }
    if (is_store(in.code)) {
      require_memory();
      if (in.a > natural_alignment(in.code)) fail("alignment larger than natural");
      static constexpr std::uint8_t kStoreType[] = {kI32, kI64, kF32, kF64, kI32, kI32, kI64, kI64, kI64};
      pop_val(kStoreType[in.code - op::I32Store]);
      pop_val(kI32);
      return;
    }
    switch (in.code) {
      case op::Unreachable:
        set_unreachable();
        break;
      case op::Nop:
        break;
      case op::Block:
      case op::Loop:
      case op::If: {
        std::vector<std::uint8_t> params, results;
        block_signature(in.block, params, results);
        if (in.code == op::If) pop_val(kI32);
        pop_vals(params);
        push_ctrl(in.code, params, results);
        break;
      }
      case op::Else: {
        if (ctrls_.back().opcode != op::If) fail("else without if");
        Ctrl c = pop_ctrl();
        push_ctrl(op::Else, c.start_types, c.end_types);
        break;
      }
      case op::End: {
        Ctrl c = pop_ctrl();
        if (c.opcode == op::If && c.start_types != c.end_types) fail("if without else must not change types");
        push_vals(c.end_types);
        break;
      }
      case op::Br:
        pop_vals(label_types(label(in.a)));
        set_unreachable();
        break;
      case op::BrIf: {
        pop_val(kI32);
        auto types = label_types(label(in.a));
        pop_vals(types);
        push_vals(types);
        break;
      }
      case op::BrTable: {
        pop_val(kI32);
        const auto default_types = label_types(label(in.targets.back()));
        const std::size_t arity = default_types.size();
        for (std::size_t i = 0; i + 1 < in.targets.size(); ++i) {
          auto types = label_types(label(in.targets[i]));
          if (types.size() != arity) fail("br_table targets with inconsistent arity");
          // Pop and re-push to check each target against the current stack.
          std::vector<std::uint8_t> popped;
          for (auto it = types.rbegin(); it != types.rend(); ++it) popped.push_back(pop_val(*it));
          for (auto it = popped.rbegin(); it != popped.rend(); ++it) push_val(*it);
        }
        pop_vals(default_types);
        set_unreachable();
        break;
      }
      case op::Return:
        pop_vals(results_);
        set_unreachable();
        break;
      case op::Call: {
        if (in.a >= m_.num_functions()) fail("call to undefined function");
        const FuncType& ft = m_.func_type(in.a);
        for (auto it = ft.params.rbegin(); it != ft.params.rend(); ++it) pop_val(static_cast<std::uint8_t>(*it));
        for (auto r : ft.results) push_val(static_cast<std::uint8_t>(r));
        break;
      }
      case op::CallIndirect: {
        if (in.b >= m_.num_tables()) fail("call_indirect without table");
        if (m_.table_type(in.b).elem != ValType::FuncRef) fail("call_indirect table must hold funcref");
        if (in.a >= m_.types.size()) fail("call_indirect type out of range");
        pop_val(kI32);
        const FuncType& ft = m_.types[in.a];
        for (auto it = ft.params.rbegin(); it != ft.params.rend(); ++it) pop_val(static_cast<std::uint8_t>(*it));
        for (auto r : ft.results) push_val(static_cast<std::uint8_t>(r));
        break;
      }
      case op::Drop:
        pop_val();
        break;
      case op::Select: {
        pop_val(kI32);
        auto t1 = pop_val();
        auto t2 = pop_val();
        if ((t1 != kUnknown && !is_num(t1)) || (t2 != kUnknown && !is_num(t2))) fail("select on non-numeric type");
        if (t1 != t2 && t1 != kUnknown && t2 != kUnknown) fail("select operand type mismatch");
        push_val(t1 == kUnknown ? t2 : t1);
        break;
      }
      case op::SelectT: {
        if (!is_num(static_cast<std::uint8_t>(in.a))) fail("select type must be numeric");
        auto t = static_cast<std::uint8_t>(in.a);
        pop_val(kI32);
        pop_val(t);
        pop_val(t);
        push_val(t);
        break;
      }
      case op::LocalGet:
        if (in.a >= locals_.size()) fail("local index out of range");
        push_val(locals_[in.a]);
        break;
      case op::LocalSet:
        if (in.a >= locals_.size()) fail("local index out of range");
        pop_val(locals_[in.a]);
        break;
      case op::LocalTee:
        if (in.a >= locals_.size()) fail("local index out of range");
        pop_val(locals_[in.a]);
        push_val(locals_[in.a]);
        break;
      case op::GlobalGet:
        if (in.a >= m_.num_globals()) fail("global index out of range");
        push_val(static_cast<std::uint8_t>(m_.global_type(in.a).type));
        break;
      case op::GlobalSet: {
        if (in.a >= m_.num_globals()) fail("global index out of range");
        auto gt = m_.global_type(in.a);
        if (!gt.mutable_) fail("global.set on immutable global");
        pop_val(static_cast<std::uint8_t>(gt.type));
        break;
      }
      case op::MemorySize:
        require_memory();
        push_val(kI32);
        break;
      case op::MemoryGrow:
        require_memory();
        pop_val(kI32);
        push_val(kI32);
        break;
      case op::I32Const: push_val(kI32); break;
      case op::I64Const: push_val(kI64); break;
      case op::F32Const: push_val(kF32); break;
      case op::F64Const: push_val(kF64); break;
      case op::MemoryInit:
        require_memory();
        require_data_count();
        if (in.a >= *m_.data_count) fail("data segment index out of range");
        pop_val(kI32);
        pop_val(kI32);
        pop_val(kI32);
        break;
      case op::DataDrop:
        require_data_count();
        if (in.a >= *m_.data_count) fail("data segment index out of range");
        break;
      case op::MemoryCopy:
      case op::MemoryFill:
        require_memory();
        pop_val(kI32);
        pop_val(kI32);
        pop_val(kI32);
        break;
      case op::TableInit:
        if (in.a >= m_.elems.size()) fail("element segment index out of range");
        if (in.b >= m_.num_tables()) fail("table index out of range");
        if (m_.table_type(in.b).elem != m_.elems[in.a].elem_type) fail("table.init type mismatch");
        pop_val(kI32);
        pop_val(kI32);
        pop_val(kI32);
        break;
      case op::ElemDrop:
        if (in.a >= m_.elems.size()) fail("element segment index out of range");
        break;
      case op::TableCopy:
        if (in.a >= m_.num_tables() || in.b >= m_.num_tables()) fail("table index out of range");
        if (m_.table_type(in.a).elem != m_.table_type(in.b).elem) fail("table.copy type mismatch");
        pop_val(kI32);
        pop_val(kI32);
        pop_val(kI32);
        break;
      default:
        fail(std::string("unsupported instruction ") + opcode_name(in.code));
    }
  }

  const Module& m_;
  std::uint32_t func_index_;
  const FunctionBody& body_;
  std::vector<std::uint8_t> locals_;
  std::vector<std::uint8_t> results_;
  std::vector<std::uint8_t> vals_;
  std::vector<Ctrl> ctrls_;
  std::size_t offset_ = 0;
};

void check_limits(const Limits& l, std::uint64_t bound, const char* what) {
  if (l.min > bound) invalid(std::string(what) + " minimum too large");
  if (l.max) {
    if (*l.max > bound) invalid(std::string(what) + " maximum too large");
    if (*l.max < l.min) invalid(std::string(what) + " maximum below minimum");
  }
}

// Constant expressions may only read imported immutable globals.
ValType const_expr_type(const Module& m, const ConstExpr& e, std::uint32_t visible_globals) {
  switch (e.kind) {
    case ConstExpr::Kind::I32: return ValType::I32;
    case ConstExpr::Kind::I64: return ValType::I64;
    case ConstExpr::Kind::F32: return ValType::F32;
    case ConstExpr::Kind::F64: return ValType::F64;
    case ConstExpr::Kind::GlobalGet: {
      if (e.value >= visible_globals) invalid("constant expression reads unknown global");
      auto gt = m.global_type(static_cast<std::uint32_t>(e.value));
      if (gt.mutable_) invalid("constant expression reads mutable global");
      return gt.type;
    }
    case ConstExpr::Kind::RefNull: return e.ref_type;
    case ConstExpr::Kind::RefFunc:
      if (e.value >= m.num_functions()) invalid("ref.func index out of range");
      return ValType::FuncRef;
  }
  invalid("bad constant expression");
}

}  // namespace

void validate(const Module& m) {
  for (const auto& im : m.imports) {
    switch (im.kind) {
      case ExternKind::Func:
        if (im.func_type >= m.types.size()) invalid("import references unknown type");
        break;
      case ExternKind::Table: check_limits(im.table.limits, 0xFFFFFFFFull, "table"); break;
      case ExternKind::Memory: check_limits(im.memory, kMaxPages, "memory"); break;
      case ExternKind::Global: break;
    }
  }
  for (auto t : m.functions) {
    if (t >= m.types.size()) invalid("function references unknown type");
  }
  for (const auto& t : m.tables) check_limits(t.limits, 0xFFFFFFFFull, "table");
  for (const auto& l : m.memories) check_limits(l, kMaxPages, "memory");
  if (m.num_memories() > 1) invalid("multiple memories are not supported");

  const std::uint32_t imported_globals = m.num_imported(ExternKind::Global);
  for (const auto& g : m.globals) {
    if (const_expr_type(m, g.init, imported_globals) != g.type.type) invalid("global initializer type mismatch");
  }

  std::set<std::string> names;
  for (const auto& e : m.exports) {
    if (!names.insert(e.name).second) invalid("duplicate export name " + e.name);
    std::uint32_t bound = 0;
    switch (e.kind) {
      case ExternKind::Func: bound = m.num_functions(); break;
      case ExternKind::Table: bound = m.num_tables(); break;
      case ExternKind::Memory: bound = m.num_memories(); break;
      case ExternKind::Global: bound = m.num_globals(); break;
    }
    if (e.index >= bound) invalid("export " + e.name + " index out of range");
  }

  if (m.start) {
    if (*m.start >= m.num_functions()) invalid("start function out of range");
    const auto& ft = m.func_type(*m.start);
    if (!ft.params.empty() || !ft.results.empty()) invalid("start function must have type [] -> []");
  }

  for (const auto& s : m.elems) {
    if (s.mode == ElemSegment::Mode::Active) {
      if (s.table >= m.num_tables()) invalid("element segment targets unknown table");
      if (const_expr_type(m, s.offset, imported_globals) != ValType::I32) invalid("element offset must be i32");
      if (m.table_type(s.table).elem != s.elem_type) invalid("element type mismatch");
    }
    for (auto f : s.funcs) {
      if (f >= m.num_functions()) invalid("element references unknown function");
    }
    for (const auto& e : s.exprs) {
      if (e.kind != ConstExpr::Kind::RefFunc && e.kind != ConstExpr::Kind::RefNull) {
        invalid("element expression must be ref.func or ref.null");
      }
      if (const_expr_type(m, e, imported_globals) != s.elem_type) invalid("element expression type mismatch");
    }
  }

  for (const auto& d : m.datas) {
    if (d.mode == DataSegment::Mode::Active) {
      if (d.memory >= m.num_memories()) invalid("data segment targets unknown memory");
      if (const_expr_type(m, d.offset, imported_globals) != ValType::I32) invalid("data offset must be i32");
    }
  }

  const std::uint32_t imported_funcs = m.num_imported(ExternKind::Func);
  for (std::size_t i = 0; i < m.codes.size(); ++i) {
    FunctionValidator(m, imported_funcs + static_cast<std::uint32_t>(i), m.codes[i]).run();
  }
}

Module decode_and_validate(ByteView bytes) {
  Module m = decode(bytes);
  validate(m);
  return m;
}

}  // namespace lma::wasm
