#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lma/bytes.hpp"

namespace lma::wasm {

constexpr std::uint32_t kPageSize = 65536;
constexpr std::uint32_t kMaxPages = 65536;

enum class ValType : std::uint8_t {
  I32 = 0x7F,
  I64 = 0x7E,
  F32 = 0x7D,
  F64 = 0x7C,
  FuncRef = 0x70,
  ExternRef = 0x6F,
};

const char* to_string(ValType t) noexcept;
bool is_valtype_byte(std::uint8_t b) noexcept;

struct FuncType {
  std::vector<ValType> params;
  std::vector<ValType> results;
  bool operator==(const FuncType&) const = default;
};

struct Limits {
  std::uint32_t min = 0;
  std::optional<std::uint32_t> max;
};

struct TableType {
  ValType elem = ValType::FuncRef;
  Limits limits;
};

struct GlobalType {
  ValType type = ValType::I32;
  bool mutable_ = false;
};

enum class ExternKind : std::uint8_t { Func = 0, Table = 1, Memory = 2, Global = 3 };

struct Import {
  std::string module;
  std::string name;
  ExternKind kind = ExternKind::Func;
  std::uint32_t func_type = 0;
  TableType table;
  Limits memory;
  GlobalType global;
};

struct Export {
  std::string name;
  ExternKind kind = ExternKind::Func;
  std::uint32_t index = 0;
};

/// A constant initializer expression, kept as its raw encoding (without
/// the trailing `end`) plus the decoded single instruction.
struct ConstExpr {
  enum class Kind { I32, I64, F32, F64, GlobalGet, RefNull, RefFunc };
  Kind kind = Kind::I32;
  std::uint64_t value = 0;  // constant bits, global index, or function index
  ValType ref_type = ValType::FuncRef;
};

struct Global {
  GlobalType type;
  ConstExpr init;
};

struct ElemSegment {
  enum class Mode { Active, Passive, Declarative };
  std::uint32_t flags = 0;  // encoding variant 0..7, preserved on re-encode
  Mode mode = Mode::Active;
  std::uint32_t table = 0;
  ConstExpr offset;
  ValType elem_type = ValType::FuncRef;
  std::uint8_t elem_kind = 0;  // for flag variants carrying an elemkind byte
  /// Function indices (flag variants 0..3) or expressions (4..7).
  std::vector<std::uint32_t> funcs;
  std::vector<ConstExpr> exprs;
  bool uses_exprs() const noexcept { return (flags & 4) != 0; }
  std::size_t size() const noexcept { return uses_exprs() ? exprs.size() : funcs.size(); }
};

struct DataSegment {
  enum class Mode { Active, Passive };
  std::uint32_t flags = 0;
  Mode mode = Mode::Active;
  std::uint32_t memory = 0;
  ConstExpr offset;
  Bytes bytes;
};

struct LocalDecl {
  std::uint32_t count = 0;
  ValType type = ValType::I32;
};

struct FunctionBody {
  std::vector<LocalDecl> locals;
  /// Instruction bytes, including the final `end`.
  Bytes code;
  /// Offset of `code` within the original module buffer (for diagnostics).
  std::size_t code_offset = 0;
};

struct CustomSection {
  std::string name;
  Bytes payload;  // bytes after the name
  /// Id of the last non-custom section preceding it (0 = before all).
  std::uint8_t after_section = 0;
};

/// Decoded module. Known sections are parsed into fields; the original
/// section order is recorded so a re-encode can place custom sections back.
struct Module {
  std::vector<FuncType> types;
  std::vector<Import> imports;
  std::vector<std::uint32_t> functions;  // type index per defined function
  std::vector<TableType> tables;
  std::vector<Limits> memories;
  std::vector<Global> globals;
  std::vector<Export> exports;
  std::optional<std::uint32_t> start;
  std::vector<ElemSegment> elems;
  std::optional<std::uint32_t> data_count;
  std::vector<FunctionBody> codes;
  std::vector<DataSegment> datas;
  std::vector<CustomSection> customs;
  /// Section ids in encounter order (0 = custom).
  std::vector<std::uint8_t> section_order;

  std::uint32_t num_imported(ExternKind kind) const;
  std::uint32_t num_functions() const { return num_imported(ExternKind::Func) + static_cast<std::uint32_t>(functions.size()); }
  std::uint32_t num_tables() const { return num_imported(ExternKind::Table) + static_cast<std::uint32_t>(tables.size()); }
  std::uint32_t num_memories() const { return num_imported(ExternKind::Memory) + static_cast<std::uint32_t>(memories.size()); }
  std::uint32_t num_globals() const { return num_imported(ExternKind::Global) + static_cast<std::uint32_t>(globals.size()); }

  /// Type of function `index` in the combined (imports first) index space.
  const FuncType& func_type(std::uint32_t index) const;
  std::uint32_t func_type_index(std::uint32_t index) const;
  GlobalType global_type(std::uint32_t index) const;
  TableType table_type(std::uint32_t index) const;
  Limits memory_limits(std::uint32_t index) const;

  /// Import record of function `index`, or nullptr for defined functions.
  const Import* func_import(std::uint32_t index) const;

  std::optional<std::uint32_t> find_export(const std::string& name, ExternKind kind) const;
};

/// Parses the binary format. Structural problems throw
/// Error(Errc::MalformedModule). Function bodies are not type-checked here;
/// see validate().
Module decode(ByteView bytes);

/// Re-encodes a module. Sections are emitted in canonical order with custom
/// sections restored near their original positions.
Bytes encode(const Module& m);

Bytes encode_const_expr(const ConstExpr& e);

}  // namespace lma::wasm
