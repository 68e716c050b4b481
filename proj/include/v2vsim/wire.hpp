#pragma once

// Fixed-layout binary record for one V2V message:
//
//   bytes   0..3    magic "V2V1" (0x56 0x32 0x56 0x31)
//   bytes   4..171  21 IEEE-754 doubles, little-endian, message order
//   bytes 172..175  CRC-32 (IEEE, as zlib) of bytes 4..171, little-endian

#include <zlib.h>

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "message.hpp"

namespace v2v::wire {

inline constexpr std::size_t kMagicSize = 4;
inline constexpr std::size_t kPayloadSize = kMessageWidth * 8;
inline constexpr std::size_t kRecordSize = kMagicSize + kPayloadSize + 4;
inline constexpr std::array<std::uint8_t, 4> kMagic = {0x56, 0x32, 0x56, 0x31};

static_assert(kRecordSize == 176);

using Record = std::array<std::uint8_t, kRecordSize>;

enum class DecodeErrorKind { bad_length, bad_magic, crc_mismatch };

class DecodeError : public std::runtime_error {
 public:
  DecodeError(DecodeErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  [[nodiscard]] DecodeErrorKind kind() const { return kind_; }

 private:
  DecodeErrorKind kind_;
};

inline std::uint32_t crc32_ieee(std::span<const std::uint8_t> bytes) {
  return static_cast<std::uint32_t>(::crc32(0L, bytes.data(), static_cast<uInt>(bytes.size())));
}

inline void put_u64_le(std::uint8_t* out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out[i] = static_cast<std::uint8_t>(v >> (8 * i));
}
inline std::uint64_t get_u64_le(const std::uint8_t* in) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[i]) << (8 * i);
  return v;
}
inline void put_u32_le(std::uint8_t* out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out[i] = static_cast<std::uint8_t>(v >> (8 * i));
}
inline std::uint32_t get_u32_le(const std::uint8_t* in) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[i]) << (8 * i);
  return v;
}

inline Record encode_wire(const V2VMessage& msg) {
  Record rec{};
  std::memcpy(rec.data(), kMagic.data(), kMagicSize);
  const auto values = msg.to_array();
  for (std::size_t i = 0; i < kMessageWidth; ++i)
    put_u64_le(rec.data() + kMagicSize + 8 * i, std::bit_cast<std::uint64_t>(values[i]));
  put_u32_le(rec.data() + kMagicSize + kPayloadSize,
             crc32_ieee(std::span<const std::uint8_t>(rec.data() + kMagicSize, kPayloadSize)));
  return rec;
}

inline V2VMessage decode_wire(std::span<const std::uint8_t> bytes) {
  if (bytes.size() != kRecordSize)
    throw DecodeError(DecodeErrorKind::bad_length, "expected record length " + std::to_string(kRecordSize) +
                                                       " bytes, got " + std::to_string(bytes.size()));
  if (std::memcmp(bytes.data(), kMagic.data(), kMagicSize) != 0)
    throw DecodeError(DecodeErrorKind::bad_magic, "bad magic (expected \"V2V1\")");
  const auto payload = bytes.subspan(kMagicSize, kPayloadSize);
  const std::uint32_t stored = get_u32_le(bytes.data() + kMagicSize + kPayloadSize);
  const std::uint32_t actual = crc32_ieee(payload);
  if (stored != actual) throw DecodeError(DecodeErrorKind::crc_mismatch, "CRC mismatch");
  std::array<double, kMessageWidth> values{};
  for (std::size_t i = 0; i < kMessageWidth; ++i)
    values[i] = std::bit_cast<double>(get_u64_le(payload.data() + 8 * i));
  return V2VMessage::from_span(values);
}

}  // namespace v2v::wire
