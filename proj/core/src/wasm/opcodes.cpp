#include "lma/wasm/opcodes.hpp"

#include <cstdio>
#include <string>

namespace lma::wasm {

unsigned natural_alignment(std::uint16_t code) {
  static constexpr unsigned kAlign[] = {
      2, 3, 2, 3, 0, 0, 1, 1, 0, 0, 1, 1, 2, 2,  // loads 0x28..0x35
      2, 3, 2, 3, 0, 1, 0, 1, 2,                 // stores 0x36..0x3E
  };
  return kAlign[code - op::I32Load];
}

unsigned access_width(std::uint16_t code) { return 1u << natural_alignment(code); }

Instr InstrReader::next() {
  Instr in;
  in.offset = r_.pos();
  std::uint16_t code = r_.u8();
  if (code == op::Prefix) {
    std::uint32_t sub = r_.u32leb();
    if (sub > 0xFF) r_.fail("unknown 0xFC subopcode");
    code = static_cast<std::uint16_t>(0xFC00 | sub);
  }
  in.code = code;
  switch (code) {
    case op::Block:
    case op::Loop:
    case op::If: {
      std::uint8_t b = r_.peek();
      if (b == 0x40) {
        r_.u8();
        in.block.kind = BlockType::Kind::Empty;
      } else if (b & 0x40) {
        r_.u8();
        in.block.kind = BlockType::Kind::Value;
        in.block.value = b;
      } else {
        std::int64_t idx = r_.sleb(33);
        if (idx < 0) r_.fail("negative block type index");
        in.block.kind = BlockType::Kind::Index;
        in.block.index = static_cast<std::uint32_t>(idx);
      }
      break;
    }
    case op::Br:
    case op::BrIf:
    case op::Call:
    case op::LocalGet:
    case op::LocalSet:
    case op::LocalTee:
    case op::GlobalGet:
    case op::GlobalSet:
    case op::RefFunc:
    case op::DataDrop:
    case op::ElemDrop:
      in.a = r_.u32leb();
      break;
    case op::BrTable: {
      std::uint32_t n = r_.u32leb();
      if (n > r_.remaining()) r_.fail("br_table too large");
      in.targets.reserve(n + 1);
      for (std::uint32_t i = 0; i <= n; ++i) in.targets.push_back(r_.u32leb());
      break;
    }
    case op::CallIndirect:
      in.a = r_.u32leb();  // type
      in.b = r_.u32leb();  // table
      break;
    case op::SelectT: {
      std::uint32_t n = r_.u32leb();
      if (n != 1) r_.fail("select with more than one type");
      in.a = r_.u8();
      break;
    }
    case op::MemorySize:
    case op::MemoryGrow:
      in.a = r_.u8();
      if (in.a != 0) r_.fail("memory index must be zero");
      break;
    case op::I32Const:
      in.imm = static_cast<std::uint32_t>(static_cast<std::int32_t>(r_.sleb(32)));
      break;
    case op::I64Const:
      in.imm = static_cast<std::uint64_t>(r_.sleb(64));
      break;
    case op::F32Const:
      in.imm = r_.fixed_le<std::uint32_t>();
      break;
    case op::F64Const:
      in.imm = r_.fixed_le<std::uint64_t>();
      break;
    case op::RefNull:
      in.a = r_.u8();
      break;
    case op::MemoryInit:
      in.a = r_.u32leb();  // data index
      in.b = r_.u8();
      if (in.b != 0) r_.fail("memory index must be zero");
      break;
    case op::MemoryCopy:
      in.a = r_.u8();
      in.b = r_.u8();
      if (in.a != 0 || in.b != 0) r_.fail("memory index must be zero");
      break;
    case op::MemoryFill:
      in.a = r_.u8();
      if (in.a != 0) r_.fail("memory index must be zero");
      break;
    case op::TableInit:
      in.a = r_.u32leb();  // elem index
      in.b = r_.u32leb();  // table index
      break;
    case op::TableCopy:
      in.a = r_.u32leb();
      in.b = r_.u32leb();
      break;
    default:
      if (is_load(code) || is_store(code)) {
        in.a = r_.u32leb();  // align
        in.imm = r_.u32leb();
      } else if (code >= 0xFC00 && code <= 0xFC07) {
        // saturating truncation, no immediates
      } else if ((code >= 0x45 && code <= 0xC4) || code == op::Unreachable || code == op::Nop ||
                 code == op::Else || code == op::End || code == op::Return || code == op::Drop ||
                 code == op::Select || code == op::RefIsNull) {
        // no immediates
      } else {
        r_.fail("unknown opcode 0x" + [&] {
          char buf[8];
          std::snprintf(buf, sizeof buf, "%x", code);
          return std::string(buf);
        }());
      }
  }
  in.length = r_.pos() - in.offset;
  return in;
}

const char* opcode_name(std::uint16_t code) {
  switch (code) {
    case op::Unreachable: return "unreachable";
    case op::Nop: return "nop";
    case op::Block: return "block";
    case op::Loop: return "loop";
    case op::If: return "if";
    case op::Else: return "else";
    case op::End: return "end";
    case op::Br: return "br";
    case op::BrIf: return "br_if";
    case op::BrTable: return "br_table";
    case op::Return: return "return";
    case op::Call: return "call";
    case op::CallIndirect: return "call_indirect";
    case op::Drop: return "drop";
    case op::Select: return "select";
    case op::SelectT: return "select";
    case op::LocalGet: return "local.get";
    case op::LocalSet: return "local.set";
    case op::LocalTee: return "local.tee";
    case op::GlobalGet: return "global.get";
    case op::GlobalSet: return "global.set";
    case op::MemorySize: return "memory.size";
    case op::MemoryGrow: return "memory.grow";
    case op::I32Const: return "i32.const";
    case op::I64Const: return "i64.const";
    case op::F32Const: return "f32.const";
    case op::F64Const: return "f64.const";
    case op::MemoryInit: return "memory.init";
    case op::DataDrop: return "data.drop";
    case op::MemoryCopy: return "memory.copy";
    case op::MemoryFill: return "memory.fill";
    case op::TableInit: return "table.init";
    case op::ElemDrop: return "elem.drop";
    case op::TableCopy: return "table.copy";
    default: break;
  }
  if (is_load(code)) return "load";
  if (is_store(code)) return "store";
  return "numeric";
}

}  // namespace lma::wasm

namespace lma::wasm {

bool numeric_sig(std::uint16_t c, NumericSig& s) {
  constexpr std::uint8_t I32 = 0x7F, I64 = 0x7E, F32 = 0x7D, F64 = 0x7C;
  auto set = [&](std::uint8_t arity, std::uint8_t in, std::uint8_t out) {
    s = NumericSig{arity, in, out};
    return true;
  };
  if (c == 0x45) return set(1, I32, I32);
  if (c >= 0x46 && c <= 0x4F) return set(2, I32, I32);
  if (c == 0x50) return set(1, I64, I32);
  if (c >= 0x51 && c <= 0x5A) return set(2, I64, I32);
  if (c >= 0x5B && c <= 0x60) return set(2, F32, I32);
  if (c >= 0x61 && c <= 0x66) return set(2, F64, I32);
  if (c >= 0x67 && c <= 0x69) return set(1, I32, I32);
  if (c >= 0x6A && c <= 0x78) return set(2, I32, I32);
  if (c >= 0x79 && c <= 0x7B) return set(1, I64, I64);
  if (c >= 0x7C && c <= 0x8A) return set(2, I64, I64);
  if (c >= 0x8B && c <= 0x91) return set(1, F32, F32);
  if (c >= 0x92 && c <= 0x98) return set(2, F32, F32);
  if (c >= 0x99 && c <= 0x9F) return set(1, F64, F64);
  if (c >= 0xA0 && c <= 0xA6) return set(2, F64, F64);
  switch (c) {
    case 0xA7: return set(1, I64, I32);
    case 0xA8: case 0xA9: return set(1, F32, I32);
    case 0xAA: case 0xAB: return set(1, F64, I32);
    case 0xAC: case 0xAD: return set(1, I32, I64);
    case 0xAE: case 0xAF: return set(1, F32, I64);
    case 0xB0: case 0xB1: return set(1, F64, I64);
    case 0xB2: case 0xB3: return set(1, I32, F32);
    case 0xB4: case 0xB5: return set(1, I64, F32);
    case 0xB6: return set(1, F64, F32);
    case 0xB7: case 0xB8: return set(1, I32, F64);
    case 0xB9: case 0xBA: return set(1, I64, F64);
    case 0xBB: return set(1, F32, F64);
    case 0xBC: return set(1, F32, I32);
    case 0xBD: return set(1, F64, I64);
    case 0xBE: return set(1, I32, F32);
    case 0xBF: return set(1, I64, F64);
    case 0xC0: case 0xC1: return set(1, I32, I32);
    case 0xC2: case 0xC3: case 0xC4: return set(1, I64, I64);
    case 0xFC00: case 0xFC01: return set(1, F32, I32);
    case 0xFC02: case 0xFC03: return set(1, F64, I32);
    case 0xFC04: case 0xFC05: return set(1, F32, I64);
    case 0xFC06: case 0xFC07: return set(1, F64, I64);
    default: return false;
  }
}

}  // namespace lma::wasm
