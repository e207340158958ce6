#include "lma/wasm/module.hpp"

#include <algorithm>
#include <array>

#include "lma/wasm/opcodes.hpp"

namespace lma::wasm {

namespace {

constexpr std::array<std::uint8_t, 8> kHeader = {0x00, 0x61, 0x73, 0x6D, 0x01, 0x00, 0x00, 0x00};

// Canonical position of each known section id (id 12, datacount, sits
// between element and code).
int section_rank(std::uint8_t id) {
  switch (id) {
    case 1: return 1;
    case 2: return 2;
    case 3: return 3;
    case 4: return 4;
    case 5: return 5;
    case 6: return 6;
    case 7: return 7;
    case 8: return 8;
    case 9: return 9;
    case 12: return 10;
    case 10: return 11;
    case 11: return 12;
    default: return -1;
  }
}

[[noreturn]] void malformed(const std::string& why) { throw Error(Errc::MalformedModule, why); }

ValType read_valtype(ByteReader& r) {
  std::uint8_t b = r.u8();
  if (!is_valtype_byte(b)) r.fail("invalid value type");
  return static_cast<ValType>(b);
}

ValType read_reftype(ByteReader& r) {
  std::uint8_t b = r.u8();
  if (b != 0x70 && b != 0x6F) r.fail("invalid reference type");
  return static_cast<ValType>(b);
}

Limits read_limits(ByteReader& r, bool memory) {
  Limits l;
  std::uint8_t flag = r.u8();
  if (flag > 1) {
    if (memory) r.fail("shared or 64-bit memories are not supported");
    r.fail("invalid limits flag");
  }
  l.min = r.u32leb();
  if (flag == 1) l.max = r.u32leb();
  return l;
}

ConstExpr read_const_expr(ByteReader& r) {
  ConstExpr e;
  std::uint8_t code = r.u8();
  switch (code) {
    case op::I32Const:
      e.kind = ConstExpr::Kind::I32;
      e.value = static_cast<std::uint32_t>(static_cast<std::int32_t>(r.sleb(32)));
      break;
    case op::I64Const:
      e.kind = ConstExpr::Kind::I64;
      e.value = static_cast<std::uint64_t>(r.sleb(64));
      break;
    case op::F32Const:
      e.kind = ConstExpr::Kind::F32;
      e.value = r.fixed_le<std::uint32_t>();
      break;
    case op::F64Const:
      e.kind = ConstExpr::Kind::F64;
      e.value = r.fixed_le<std::uint64_t>();
      break;
    case op::GlobalGet:
      e.kind = ConstExpr::Kind::GlobalGet;
      e.value = r.u32leb();
      break;
    case op::RefNull:
      e.kind = ConstExpr::Kind::RefNull;
      e.ref_type = read_reftype(r);
      break;
    case op::RefFunc:
      e.kind = ConstExpr::Kind::RefFunc;
      e.value = r.u32leb();
      break;
    default:
      r.fail("unsupported constant expression");
  }
  if (r.u8() != op::End) r.fail("constant expression must be a single instruction");
  return e;
}

GlobalType read_global_type(ByteReader& r) {
  GlobalType g;
  g.type = read_valtype(r);
  std::uint8_t m = r.u8();
  if (m > 1) r.fail("invalid mutability");
  g.mutable_ = m == 1;
  return g;
}

template <typename F>
void read_vec(ByteReader& r, F&& each) {
  std::uint32_t n = r.u32leb();
  // Each element occupies at least one byte.
  if (n > r.remaining()) r.fail("vector length exceeds section");
  for (std::uint32_t i = 0; i < n; ++i) each(i);
}

void decode_section(Module& m, std::uint8_t id, ByteReader& r, std::size_t base_offset) {
  switch (id) {
    case 1:
      read_vec(r, [&](std::uint32_t) {
        if (r.u8() != 0x60) r.fail("expected function type");
        FuncType ft;
        read_vec(r, [&](std::uint32_t) { ft.params.push_back(read_valtype(r)); });
        read_vec(r, [&](std::uint32_t) { ft.results.push_back(read_valtype(r)); });
        m.types.push_back(std::move(ft));
      });
      break;
    case 2:
      read_vec(r, [&](std::uint32_t) {
        Import im;
        im.module = r.name();
        im.name = r.name();
        std::uint8_t kind = r.u8();
        switch (kind) {
          case 0:
            im.kind = ExternKind::Func;
            im.func_type = r.u32leb();
            break;
          case 1:
            im.kind = ExternKind::Table;
            im.table.elem = read_reftype(r);
            im.table.limits = read_limits(r, false);
            break;
          case 2:
            im.kind = ExternKind::Memory;
            im.memory = read_limits(r, true);
            break;
          case 3:
            im.kind = ExternKind::Global;
            im.global = read_global_type(r);
            break;
          default:
            r.fail("invalid import kind");
        }
        m.imports.push_back(std::move(im));
      });
      break;
    case 3:
      read_vec(r, [&](std::uint32_t) { m.functions.push_back(r.u32leb()); });
      break;
    case 4:
      read_vec(r, [&](std::uint32_t) {
        TableType t;
        t.elem = read_reftype(r);
        t.limits = read_limits(r, false);
        m.tables.push_back(t);
      });
      break;
    case 5:
      read_vec(r, [&](std::uint32_t) { m.memories.push_back(read_limits(r, true)); });
      break;
    case 6:
      read_vec(r, [&](std::uint32_t) {
        Global g;
        g.type = read_global_type(r);
        g.init = read_const_expr(r);
        m.globals.push_back(g);
      });
      break;
    case 7:
      read_vec(r, [&](std::uint32_t) {
        Export e;
        e.name = r.name();
        std::uint8_t kind = r.u8();
        if (kind > 3) r.fail("invalid export kind");
        e.kind = static_cast<ExternKind>(kind);
        e.index = r.u32leb();
        m.exports.push_back(std::move(e));
      });
      break;
    case 8:
      m.start = r.u32leb();
      break;
    case 9:
      read_vec(r, [&](std::uint32_t) {
        ElemSegment s;
        s.flags = r.u32leb();
        if (s.flags > 7) r.fail("invalid element segment flags");
        const bool passive_or_decl = s.flags & 1;
        const bool explicit_table = s.flags & 2;
        if (!passive_or_decl) {
          s.mode = ElemSegment::Mode::Active;
          if (explicit_table) s.table = r.u32leb();
          s.offset = read_const_expr(r);
        } else {
          s.mode = explicit_table ? ElemSegment::Mode::Declarative : ElemSegment::Mode::Passive;
        }
        if (s.uses_exprs()) {
          if (s.flags != 4) s.elem_type = read_reftype(r);
          read_vec(r, [&](std::uint32_t) { s.exprs.push_back(read_const_expr(r)); });
        } else {
          if (s.flags != 0) {
            s.elem_kind = r.u8();
            if (s.elem_kind != 0) r.fail("invalid element kind");
          }
          read_vec(r, [&](std::uint32_t) { s.funcs.push_back(r.u32leb()); });
        }
        m.elems.push_back(std::move(s));
      });
      break;
    case 12:
      m.data_count = r.u32leb();
      break;
    case 10:
      read_vec(r, [&](std::uint32_t) {
        std::uint32_t size = r.u32leb();
        const std::size_t body_start = r.pos();
        auto raw = r.take(size);
        ByteReader br(raw, Errc::MalformedModule);
        FunctionBody body;
        std::uint64_t total = 0;
        read_vec(br, [&](std::uint32_t) {
          LocalDecl d;
          d.count = br.u32leb();
          d.type = read_valtype(br);
          total += d.count;
          if (total > 50000) br.fail("too many locals");
          body.locals.push_back(d);
        });
        auto code = br.take(br.remaining());
        if (code.empty() || code.back() != op::End) malformed("function body must end with `end`");
        body.code.assign(code.begin(), code.end());
        body.code_offset = base_offset + body_start + br.pos() - code.size();
        m.codes.push_back(std::move(body));
      });
      break;
    case 11:
      read_vec(r, [&](std::uint32_t) {
        DataSegment d;
        d.flags = r.u32leb();
        if (d.flags > 2) r.fail("invalid data segment flags");
        if (d.flags == 1) {
          d.mode = DataSegment::Mode::Passive;
        } else {
          if (d.flags == 2) d.memory = r.u32leb();
          d.offset = read_const_expr(r);
        }
        std::uint32_t len = r.u32leb();
        auto raw = r.take(len);
        d.bytes.assign(raw.begin(), raw.end());
        m.datas.push_back(std::move(d));
      });
      break;
    default:
      malformed("unknown section id " + std::to_string(id));
  }
}

}  // namespace

const char* to_string(ValType t) noexcept {
  switch (t) {
    case ValType::I32: return "i32";
    case ValType::I64: return "i64";
    case ValType::F32: return "f32";
    case ValType::F64: return "f64";
    case ValType::FuncRef: return "funcref";
    case ValType::ExternRef: return "externref";
  }
  return "?";
}

bool is_valtype_byte(std::uint8_t b) noexcept {
  return b == 0x7F || b == 0x7E || b == 0x7D || b == 0x7C || b == 0x70 || b == 0x6F;
}

std::uint32_t Module::num_imported(ExternKind kind) const {
  return static_cast<std::uint32_t>(
      std::count_if(imports.begin(), imports.end(), [&](const Import& i) { return i.kind == kind; }));
}

const Import* Module::func_import(std::uint32_t index) const {
  std::uint32_t n = 0;
  for (const auto& im : imports) {
    if (im.kind != ExternKind::Func) continue;
    if (n == index) return &im;
    ++n;
  }
  return nullptr;
}

std::uint32_t Module::func_type_index(std::uint32_t index) const {
  if (const Import* im = func_import(index)) return im->func_type;
  const std::uint32_t local = index - num_imported(ExternKind::Func);
  if (local >= functions.size()) malformed("function index out of range");
  return functions[local];
}

const FuncType& Module::func_type(std::uint32_t index) const {
  const std::uint32_t t = func_type_index(index);
  if (t >= types.size()) malformed("type index out of range");
  return types[t];
}

GlobalType Module::global_type(std::uint32_t index) const {
  std::uint32_t n = 0;
  for (const auto& im : imports) {
    if (im.kind != ExternKind::Global) continue;
    if (n == index) return im.global;
    ++n;
  }
  if (index - n >= globals.size()) malformed("global index out of range");
  return globals[index - n].type;
}

TableType Module::table_type(std::uint32_t index) const {
  std::uint32_t n = 0;
  for (const auto& im : imports) {
    if (im.kind != ExternKind::Table) continue;
    if (n == index) return im.table;
    ++n;
  }
  if (index - n >= tables.size()) malformed("table index out of range");
  return tables[index - n];
}

Limits Module::memory_limits(std::uint32_t index) const {
  std::uint32_t n = 0;
  for (const auto& im : imports) {
    if (im.kind != ExternKind::Memory) continue;
    if (n == index) return im.memory;
    ++n;
  }
  if (index - n >= memories.size()) malformed("memory index out of range");
  return memories[index - n];
}

std::optional<std::uint32_t> Module::find_export(const std::string& name, ExternKind kind) const {
  for (const auto& e : exports) {
    if (e.name == name && e.kind == kind) return e.index;
  }
  return std::nullopt;
}

Module decode(ByteView bytes) {
  ByteReader r(bytes, Errc::MalformedModule);
  auto header = r.take(kHeader.size());
  if (!std::equal(header.begin(), header.begin() + 4, kHeader.begin())) malformed("bad magic");
  if (!std::equal(header.begin() + 4, header.end(), kHeader.begin() + 4)) malformed("unsupported version");

  Module m;
  int last_rank = 0;
  std::uint8_t last_known = 0;
  while (!r.at_end()) {
    std::uint8_t id = r.u8();
    std::uint32_t size = r.u32leb();
    const std::size_t payload_offset = r.pos();
    auto payload = r.take(size);
    ByteReader sr(payload, Errc::MalformedModule);
    m.section_order.push_back(id);
    if (id == 0) {
      CustomSection c;
      c.name = sr.name();
      auto rest = sr.take(sr.remaining());
      c.payload.assign(rest.begin(), rest.end());
      c.after_section = last_known;
      m.customs.push_back(std::move(c));
      continue;
    }
    int rank = section_rank(id);
    if (rank < 0) malformed("unknown section id " + std::to_string(id));
    if (rank <= last_rank) malformed("section " + std::to_string(id) + " out of order or duplicated");
    last_rank = rank;
    last_known = id;
    decode_section(m, id, sr, payload_offset);
    if (!sr.at_end()) malformed("section " + std::to_string(id) + " size mismatch");
  }

  if (m.functions.size() != m.codes.size()) malformed("function and code section lengths differ");
  if (m.data_count && *m.data_count != m.datas.size()) malformed("data count mismatch");
  return m;
}

Bytes encode_const_expr(const ConstExpr& e) {
  Bytes out;
  switch (e.kind) {
    case ConstExpr::Kind::I32:
      out.push_back(op::I32Const);
      put_sleb(out, static_cast<std::int32_t>(static_cast<std::uint32_t>(e.value)));
      break;
    case ConstExpr::Kind::I64:
      out.push_back(op::I64Const);
      put_sleb(out, static_cast<std::int64_t>(e.value));
      break;
    case ConstExpr::Kind::F32:
      out.push_back(op::F32Const);
      put_fixed_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.value));
      break;
    case ConstExpr::Kind::F64:
      out.push_back(op::F64Const);
      put_fixed_le<std::uint64_t>(out, e.value);
      break;
    case ConstExpr::Kind::GlobalGet:
      out.push_back(op::GlobalGet);
      put_uleb(out, e.value);
      break;
    case ConstExpr::Kind::RefNull:
      out.push_back(op::RefNull);
      out.push_back(static_cast<std::uint8_t>(e.ref_type));
      break;
    case ConstExpr::Kind::RefFunc:
      out.push_back(op::RefFunc);
      put_uleb(out, e.value);
      break;
  }
  out.push_back(op::End);
  return out;
}

namespace {

void put_limits(Bytes& out, const Limits& l) {
  out.push_back(l.max ? 1 : 0);
  put_uleb(out, l.min);
  if (l.max) put_uleb(out, *l.max);
}

Bytes encode_section_payload(const Module& m, std::uint8_t id) {
  Bytes p;
  switch (id) {
    case 1:
      put_uleb(p, m.types.size());
      for (const auto& t : m.types) {
        p.push_back(0x60);
        put_uleb(p, t.params.size());
        for (auto v : t.params) p.push_back(static_cast<std::uint8_t>(v));
        put_uleb(p, t.results.size());
        for (auto v : t.results) p.push_back(static_cast<std::uint8_t>(v));
      }
      break;
    case 2:
      put_uleb(p, m.imports.size());
      for (const auto& im : m.imports) {
        put_name(p, im.module);
        put_name(p, im.name);
        p.push_back(static_cast<std::uint8_t>(im.kind));
        switch (im.kind) {
          case ExternKind::Func: put_uleb(p, im.func_type); break;
          case ExternKind::Table:
            p.push_back(static_cast<std::uint8_t>(im.table.elem));
            put_limits(p, im.table.limits);
            break;
          case ExternKind::Memory: put_limits(p, im.memory); break;
          case ExternKind::Global:
            p.push_back(static_cast<std::uint8_t>(im.global.type));
            p.push_back(im.global.mutable_ ? 1 : 0);
            break;
        }
      }
      break;
    case 3:
      put_uleb(p, m.functions.size());
      for (auto t : m.functions) put_uleb(p, t);
      break;
    case 4:
      put_uleb(p, m.tables.size());
      for (const auto& t : m.tables) {
        p.push_back(static_cast<std::uint8_t>(t.elem));
        put_limits(p, t.limits);
      }
      break;
    case 5:
      put_uleb(p, m.memories.size());
      for (const auto& l : m.memories) put_limits(p, l);
      break;
    case 6:
      put_uleb(p, m.globals.size());
      for (const auto& g : m.globals) {
        p.push_back(static_cast<std::uint8_t>(g.type.type));
        p.push_back(g.type.mutable_ ? 1 : 0);
        put_bytes(p, encode_const_expr(g.init));
      }
      break;
    case 7:
      put_uleb(p, m.exports.size());
      for (const auto& e : m.exports) {
        put_name(p, e.name);
        p.push_back(static_cast<std::uint8_t>(e.kind));
        put_uleb(p, e.index);
      }
      break;
    case 8:
      put_uleb(p, *m.start);
      break;
    case 9:
      put_uleb(p, m.elems.size());
      for (const auto& s : m.elems) {
        put_uleb(p, s.flags);
        if (s.mode == ElemSegment::Mode::Active) {
          if (s.flags & 2) put_uleb(p, s.table);
          put_bytes(p, encode_const_expr(s.offset));
        }
        if (s.uses_exprs()) {
          if (s.flags != 4) p.push_back(static_cast<std::uint8_t>(s.elem_type));
          put_uleb(p, s.exprs.size());
          for (const auto& e : s.exprs) put_bytes(p, encode_const_expr(e));
        } else {
          if (s.flags != 0) p.push_back(s.elem_kind);
          put_uleb(p, s.funcs.size());
          for (auto f : s.funcs) put_uleb(p, f);
        }
      }
      break;
    case 12:
      put_uleb(p, *m.data_count);
      break;
    case 10:
      put_uleb(p, m.codes.size());
      for (const auto& body : m.codes) {
        Bytes b;
        put_uleb(b, body.locals.size());
        for (const auto& d : body.locals) {
          put_uleb(b, d.count);
          b.push_back(static_cast<std::uint8_t>(d.type));
        }
        put_bytes(b, body.code);
        put_uleb(p, b.size());
        put_bytes(p, b);
      }
      break;
    case 11:
      put_uleb(p, m.datas.size());
      for (const auto& d : m.datas) {
        put_uleb(p, d.flags);
        if (d.flags == 2) put_uleb(p, d.memory);
        if (d.mode == DataSegment::Mode::Active) put_bytes(p, encode_const_expr(d.offset));
        put_uleb(p, d.bytes.size());
        put_bytes(p, d.bytes);
      }
      break;
  }
  return p;
}

bool section_present(const Module& m, std::uint8_t id) {
  if (std::find(m.section_order.begin(), m.section_order.end(), id) != m.section_order.end()) return true;
  switch (id) {
    case 1: return !m.types.empty();
    case 2: return !m.imports.empty();
    case 3: return !m.functions.empty();
    case 4: return !m.tables.empty();
    case 5: return !m.memories.empty();
    case 6: return !m.globals.empty();
    case 7: return !m.exports.empty();
    case 8: return m.start.has_value();
    case 9: return !m.elems.empty();
    case 12: return m.data_count.has_value();
    case 10: return !m.codes.empty();
    case 11: return !m.datas.empty();
  }
  return false;
}

void put_section(Bytes& out, std::uint8_t id, const Bytes& payload) {
  out.push_back(id);
  put_uleb(out, payload.size());
  put_bytes(out, payload);
}

}  // namespace

Bytes encode(const Module& m) {
  Bytes out(kHeader.begin(), kHeader.end());
  auto emit_customs_after = [&](std::uint8_t id) {
    for (const auto& c : m.customs) {
      if (c.after_section != id) continue;
      Bytes p;
      put_name(p, c.name);
      put_bytes(p, c.payload);
      put_section(out, 0, p);
    }
  };
  emit_customs_after(0);
  static constexpr std::uint8_t kOrder[] = {1, 2, 3, 4, 5, 6, 7, 8, 9, 12, 10, 11};
  for (std::uint8_t id : kOrder) {
    if (section_present(m, id)) {
      if (id == 8 && !m.start) continue;
      if (id == 12 && !m.data_count) continue;
      put_section(out, id, encode_section_payload(m, id));
    }
    emit_customs_after(id);
  }
  return out;
}

}  // namespace lma::wasm
