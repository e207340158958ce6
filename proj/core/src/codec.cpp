#include "lma/codec.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstring>

#include "lma/error.hpp"

namespace lma {

namespace {

constexpr std::uint8_t kZeroTag = 0x00;
constexpr std::uint8_t kLitTag = 0x01;
constexpr char kMagic[4] = {'L', 'M', 'A', '1'};

std::size_t zero_run(ByteView m, std::size_t i) {
  std::size_t j = i;
  while (j < m.size() && m[j] == 0) ++j;
  return j - i;
}

}  // namespace

Bytes rle_encode(ByteView m) {
  Bytes out;
  std::size_t i = 0;
  while (i < m.size()) {
    std::size_t run = zero_run(m, i);
    if (run >= kMinZeroRun) {
      out.push_back(kZeroTag);
      put_uleb(out, run);
      i += run;
      continue;
    }
    // Literal extends until the next zero run long enough to be a token.
    std::size_t j = i;
    while (j < m.size()) {
      if (m[j] == 0) {
        std::size_t z = zero_run(m, j);
        if (z >= kMinZeroRun) break;
        j += z;
      } else {
        ++j;
      }
    }
    out.push_back(kLitTag);
    put_uleb(out, j - i);
    out.insert(out.end(), m.begin() + i, m.begin() + j);
    i = j;
  }
  return out;
}

Bytes rle_decode(ByteView stream, std::uint64_t expected_len) {
  ByteReader r(stream, Errc::TruncatedStream);
  Bytes out;
  out.reserve(expected_len);
  while (!r.at_end()) {
    std::uint8_t tag = r.u8();
    if (tag != kZeroTag && tag != kLitTag)
      throw Error(Errc::MalformedToken, "unknown token tag " + std::to_string(tag));
    std::uint64_t n = r.uleb(64);
    if (n == 0) throw Error(Errc::MalformedToken, "zero-length token");
    if (n > expected_len - std::min<std::uint64_t>(expected_len, out.size()))
      throw Error(Errc::LengthMismatch, "stream decodes past expected length " + std::to_string(expected_len));
    if (tag == kZeroTag) {
      out.resize(out.size() + n, 0);
    } else {
      ByteView lit = r.take(n);
      out.insert(out.end(), lit.begin(), lit.end());
    }
  }
  if (out.size() != expected_len)
    throw Error(Errc::LengthMismatch,
                "decoded " + std::to_string(out.size()) + " bytes, expected " + std::to_string(expected_len));
  return out;
}

std::uint32_t crc32(ByteView data, std::uint32_t seed) {
  uLong c = seed;
  const Bytef* p = data.data();
  std::size_t n = data.size();
  while (n) {
    uInt chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    c = ::crc32(c, p, chunk);
    p += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(c);
}

void append_record(Bytes& out, const SnapshotRecord& rec) {
  const std::size_t start = out.size();
  out.insert(out.end(), kMagic, kMagic + 4);
  out.push_back(kRecordVersion);
  out.insert(out.end(), rec.session_id.begin(), rec.session_id.end());
  put_fixed_le<std::uint64_t>(out, rec.seq_no);
  out.push_back(rec.reason_code);
  put_fixed_le<std::uint64_t>(out, rec.mem_size_bytes);
  put_fixed_le<std::uint64_t>(out, rec.payload.size());
  put_bytes(out, rec.payload);
  put_fixed_le<std::uint32_t>(out, crc32(ByteView(out).subspan(start)));
}

Bytes frame_record(const SnapshotRecord& rec) {
  Bytes out;
  out.reserve(kRecordHeaderSize + rec.payload.size() + 4);
  append_record(out, rec);
  return out;
}

SnapshotRecord parse_record(ByteView data, std::size_t* consumed) {
  ByteReader r(data, Errc::Truncated);
  ByteView magic = r.take(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw Error(Errc::BadMagic, "record magic is not LMA1");
  std::uint8_t version = r.u8();
  if (version != kRecordVersion) throw Error(Errc::UnsupportedVersion, "record version " + std::to_string(version));
  SnapshotRecord rec;
  ByteView sid = r.take(16);
  std::copy(sid.begin(), sid.end(), rec.session_id.begin());
  rec.seq_no = r.fixed_le<std::uint64_t>();
  rec.reason_code = r.u8();
  rec.mem_size_bytes = r.fixed_le<std::uint64_t>();
  std::uint64_t payload_len = r.fixed_le<std::uint64_t>();
  if (payload_len > r.remaining()) throw Error(Errc::Truncated, "payload extends past end of input");
  ByteView payload = r.take(static_cast<std::size_t>(payload_len));
  const std::size_t body_len = r.pos();
  std::uint32_t stored = r.fixed_le<std::uint32_t>();
  if (stored != crc32(data.subspan(0, body_len))) throw Error(Errc::ChecksumMismatch, "record CRC-32 mismatch");
  rec.payload.assign(payload.begin(), payload.end());
  if (consumed) *consumed = r.pos();
  return rec;
}

SnapshotRecord make_record(const SessionId& session, std::uint64_t seq, std::uint8_t reason, ByteView memory) {
  SnapshotRecord rec;
  rec.session_id = session;
  rec.seq_no = seq;
  rec.reason_code = reason;
  rec.mem_size_bytes = memory.size();
  rec.payload = rle_encode(memory);
  return rec;
}

Bytes record_memory(const SnapshotRecord& rec) { return rle_decode(rec.payload, rec.mem_size_bytes); }

std::vector<SnapshotRecord> parse_stream(ByteView data) {
  std::vector<SnapshotRecord> out;
  std::size_t pos = 0;
  while (pos < data.size()) {
    std::size_t used = 0;
    out.push_back(parse_record(data.subspan(pos), &used));
    pos += used;
  }
  return out;
}

std::string session_hex(const SessionId& id) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  for (auto b : id) {
    s.push_back(digits[b >> 4]);
    s.push_back(digits[b & 15]);
  }
  return s;
}

}  // namespace lma
