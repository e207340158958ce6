#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "lma/bytes.hpp"

namespace lma {

/// Zero runs at least this long become run tokens; shorter ones are folded
/// into literals.
inline constexpr std::size_t kMinZeroRun = 4;

Bytes rle_encode(ByteView memory);
/// Throws TruncatedStream, LengthMismatch or MalformedToken.
Bytes rle_decode(ByteView stream, std::uint64_t expected_len);

using SessionId = std::array<std::uint8_t, 16>;

struct SnapshotRecord {
  SessionId session_id{};
  std::uint64_t seq_no = 0;
  std::uint8_t reason_code = 0;
  std::uint64_t mem_size_bytes = 0;
  Bytes payload;  // RLE stream

  bool operator==(const SnapshotRecord&) const = default;
};

inline constexpr std::uint8_t kRecordVersion = 1;
/// magic + version + session + seq + reason + mem_size + payload_len
inline constexpr std::size_t kRecordHeaderSize = 4 + 1 + 16 + 8 + 1 + 8 + 8;

std::uint32_t crc32(ByteView data, std::uint32_t seed = 0);

Bytes frame_record(const SnapshotRecord& rec);
void append_record(Bytes& out, const SnapshotRecord& rec);

/// Parses one record from the front of `data`; `consumed` receives its
/// framed length. Throws BadMagic, UnsupportedVersion, ChecksumMismatch or
/// Truncated.
SnapshotRecord parse_record(ByteView data, std::size_t* consumed = nullptr);

/// Builds a record from a memory image (encodes the payload).
SnapshotRecord make_record(const SessionId& session, std::uint64_t seq, std::uint8_t reason, ByteView memory);

/// Decodes a record's payload, checking it against mem_size_bytes.
Bytes record_memory(const SnapshotRecord& rec);

/// Splits a concatenated `.lmas` stream. Stops with an error at the first
/// malformed record.
std::vector<SnapshotRecord> parse_stream(ByteView data);

std::string session_hex(const SessionId& id);

}  // namespace lma
