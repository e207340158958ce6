#pragma once

#include <cstdint>
#include <vector>

#include "lma/bytes.hpp"

namespace lma::wasm {

/// Opcodes are widened to 16 bits: single-byte opcodes keep their value,
/// 0xFC-prefixed ones become 0xFC00 | subopcode.
namespace op {
constexpr std::uint16_t Unreachable = 0x00, Nop = 0x01, Block = 0x02, Loop = 0x03, If = 0x04,
                        Else = 0x05, End = 0x0B, Br = 0x0C, BrIf = 0x0D, BrTable = 0x0E,
                        Return = 0x0F, Call = 0x10, CallIndirect = 0x11, Drop = 0x1A,
                        Select = 0x1B, SelectT = 0x1C, LocalGet = 0x20, LocalSet = 0x21,
                        LocalTee = 0x22, GlobalGet = 0x23, GlobalSet = 0x24,
                        I32Load = 0x28, I64Load32U = 0x35, I32Store = 0x36, I64Store32 = 0x3E,
                        MemorySize = 0x3F, MemoryGrow = 0x40, I32Const = 0x41, I64Const = 0x42,
                        F32Const = 0x43, F64Const = 0x44, RefNull = 0xD0, RefIsNull = 0xD1,
                        RefFunc = 0xD2;
constexpr std::uint16_t Prefix = 0xFC;
constexpr std::uint16_t MemoryInit = 0xFC08, DataDrop = 0xFC09, MemoryCopy = 0xFC0A,
                        MemoryFill = 0xFC0B, TableInit = 0xFC0C, ElemDrop = 0xFC0D,
                        TableCopy = 0xFC0E;
}  // namespace op

inline bool is_load(std::uint16_t code) { return code >= op::I32Load && code <= op::I64Load32U; }
inline bool is_store(std::uint16_t code) { return code >= op::I32Store && code <= op::I64Store32; }

/// log2 of the natural alignment of a load/store opcode.
unsigned natural_alignment(std::uint16_t code);
/// Access width in bytes of a load/store opcode.
unsigned access_width(std::uint16_t code);

/// Block type: empty, a single value type, or a type-section index.
struct BlockType {
  enum class Kind { Empty, Value, Index } kind = Kind::Empty;
  std::uint8_t value = 0;
  std::uint32_t index = 0;
};

/// One decoded instruction with its immediates and byte span.
struct Instr {
  std::uint16_t code = 0;
  std::size_t offset = 0;  // relative to the body's code start
  std::size_t length = 0;
  BlockType block;
  std::uint32_t a = 0;      // index immediate / memarg align / first index
  std::uint32_t b = 0;      // second index (call_indirect table, memory.copy dst...)
  std::uint64_t imm = 0;    // memarg offset or constant bits
  std::vector<std::uint32_t> targets;  // br_table labels, default last
};

/// Streams instructions from a function body. Unknown opcodes throw
/// Error(Errc::MalformedModule).
class InstrReader {
 public:
  explicit InstrReader(ByteView code) : r_(code, Errc::MalformedModule) {}
  bool done() const { return r_.at_end(); }
  std::size_t pos() const { return r_.pos(); }
  Instr next();

 private:
  ByteReader r_;
};

const char* opcode_name(std::uint16_t code);

/// Operand signature of a pure numeric instruction (0x45..0xC4 and the
/// saturating truncations). `arity` is 1 or 2; value types are raw bytes.
struct NumericSig {
  std::uint8_t arity = 0;
  std::uint8_t in = 0;
  std::uint8_t out = 0;
};

/// Returns false when `code` is not a pure numeric instruction.
bool numeric_sig(std::uint16_t code, NumericSig& sig);

}  // namespace lma::wasm
