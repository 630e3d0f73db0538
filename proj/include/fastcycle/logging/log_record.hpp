#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <istream>
#include <iterator>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "fastcycle/core/envelope.hpp"
#include "fastcycle/error.hpp"

namespace fastcycle {

// On-disk record layout, all integers little-endian, no padding:
//
//   off  size  field
//     0     4  magic "FCL1"
//     4     1  version (1)
//     5     2  topic_len     u16
//     7     8  seq           u64
//    15     8  publish_ts_ns i64
//    23     4  payload_len   u32
//    27     *  topic bytes, then payload bytes
inline constexpr std::array<std::byte, 4> kLogMagic{std::byte{'F'}, std::byte{'C'}, std::byte{'L'},
                                                    std::byte{'1'}};
inline constexpr std::uint8_t kLogVersion = 1;
inline constexpr std::size_t kLogHeaderSize = 27;

struct LogRecord {
  std::string topic;
  std::uint64_t seq = 0;
  std::int64_t publish_ts_ns = 0;
  std::vector<std::byte> payload;

  friend bool operator==(const LogRecord&, const LogRecord&) = default;
};

namespace detail {

template <class T>
void put_le(std::vector<std::byte>& out, T value) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::byte>(u & 0xFFu));
    u = static_cast<U>(u >> 8);
  }
}

template <class T>
T get_le(const std::byte* p) {
  using U = std::make_unsigned_t<T>;
  U u = 0;
  for (std::size_t i = sizeof(T); i-- > 0;) u = static_cast<U>((u << 8) | std::to_integer<U>(p[i]));
  return static_cast<T>(u);
}

inline void encode_fields(std::vector<std::byte>& out, std::string_view topic, std::uint64_t seq,
                          std::int64_t ts, std::span<const std::byte> payload) {
  if (topic.size() > 0xFFFF) throw Error(ErrorCode::invalid_topic_name, "topic too long for log record");
  if (payload.size() > 0xFFFFFFFFull) throw Error(ErrorCode::invalid_field, "payload too large for log record");
  out.reserve(out.size() + kLogHeaderSize + topic.size() + payload.size());
  out.insert(out.end(), kLogMagic.begin(), kLogMagic.end());
  out.push_back(std::byte{kLogVersion});
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(topic.size()));
  put_le<std::uint64_t>(out, seq);
  put_le<std::int64_t>(out, ts);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(payload.size()));
  const auto* t = reinterpret_cast<const std::byte*>(topic.data());
  out.insert(out.end(), t, t + topic.size());
  out.insert(out.end(), payload.begin(), payload.end());
}

}  // namespace detail

/// Appends the encoding of `env` to `out`.
inline void encode_record(const MessageEnvelope& env, std::vector<std::byte>& out) {
  const auto payload = env.payload ? env.payload->bytes() : std::span<const std::byte>{};
  detail::encode_fields(out, env.topic.str(), env.seq, env.publish_ts, payload);
}

inline std::vector<std::byte> encode_record(const MessageEnvelope& env) {
  std::vector<std::byte> out;
  encode_record(env, out);
  return out;
}

inline std::vector<std::byte> encode_record(const LogRecord& rec) {
  std::vector<std::byte> out;
  detail::encode_fields(out, rec.topic, rec.seq, rec.publish_ts_ns, rec.payload);
  return out;
}

struct DecodedRecord {
  LogRecord record;
  std::size_t consumed = 0;
};

/// Parses one record from the head of `input`. `base_offset` is added to the
/// offset reported by DecodeError.
inline DecodedRecord decode_record(std::span<const std::byte> input, std::uint64_t base_offset = 0) {
  if (input.size() >= kLogMagic.size() &&
      std::memcmp(input.data(), kLogMagic.data(), kLogMagic.size()) != 0) {
    throw DecodeError(ErrorCode::bad_magic, base_offset, "record does not start with FCL1");
  }
  if (input.size() < kLogHeaderSize) {
    if (input.size() < kLogMagic.size() &&
        std::memcmp(input.data(), kLogMagic.data(), input.size()) != 0) {
      throw DecodeError(ErrorCode::bad_magic, base_offset, "record does not start with FCL1");
    }
    throw DecodeError(ErrorCode::truncated, base_offset,
                      "header needs 27 bytes, " + std::to_string(input.size()) + " available");
  }
  const auto version = std::to_integer<std::uint8_t>(input[4]);
  if (version != kLogVersion) {
    throw DecodeError(ErrorCode::unsupported_version, base_offset,
                      "record version " + std::to_string(version));
  }
  const auto* p = input.data();
  const auto topic_len = detail::get_le<std::uint16_t>(p + 5);
  const auto payload_len = detail::get_le<std::uint32_t>(p + 23);
  const std::size_t total = kLogHeaderSize + topic_len + std::size_t{payload_len};
  if (input.size() < total) {
    throw DecodeError(ErrorCode::truncated, base_offset,
                      "record declares " + std::to_string(total) + " bytes, " +
                          std::to_string(input.size()) + " available");
  }
  DecodedRecord out;
  out.record.topic.assign(reinterpret_cast<const char*>(p + kLogHeaderSize), topic_len);
  out.record.seq = detail::get_le<std::uint64_t>(p + 7);
  out.record.publish_ts_ns = detail::get_le<std::int64_t>(p + 15);
  const auto* body = p + kLogHeaderSize + topic_len;
  out.record.payload.assign(body, body + payload_len);
  out.consumed = total;
  return out;
}

/// Streams records out of a log. Iteration stops at a clean end of stream;
/// corruption raises DecodeError carrying the offset of the bad record.
class LogReader {
 public:
  explicit LogReader(std::istream& in) : in_(in) {}

  std::optional<LogRecord> next() {
    std::array<std::byte, kLogHeaderSize> header{};
    const std::size_t got = read(header.data(), header.size());
    if (got == 0) return std::nullopt;
    if (got < kLogHeaderSize) {
      decode_record(std::span<const std::byte>(header.data(), got), offset_);  // throws
    }
    const auto topic_len = detail::get_le<std::uint16_t>(header.data() + 5);
    const auto payload_len = detail::get_le<std::uint32_t>(header.data() + 23);
    // Validates magic and version before trusting the lengths.
    if (std::memcmp(header.data(), kLogMagic.data(), kLogMagic.size()) != 0 ||
        std::to_integer<std::uint8_t>(header[4]) != kLogVersion) {
      decode_record(header, offset_);
    }
    std::vector<std::byte> buf(kLogHeaderSize + topic_len + std::size_t{payload_len});
    std::memcpy(buf.data(), header.data(), kLogHeaderSize);
    const std::size_t body = read(buf.data() + kLogHeaderSize, buf.size() - kLogHeaderSize);
    auto decoded = decode_record(std::span<const std::byte>(buf.data(), kLogHeaderSize + body), offset_);
    offset_ += decoded.consumed;
    ++count_;
    return std::move(decoded.record);
  }

  std::uint64_t offset() const noexcept { return offset_; }
  std::uint64_t count() const noexcept { return count_; }

  class iterator {
   public:
    using iterator_category = std::input_iterator_tag;
    using value_type = LogRecord;
    using difference_type = std::ptrdiff_t;
    using pointer = const LogRecord*;
    using reference = const LogRecord&;

    iterator() = default;
    explicit iterator(LogReader* reader) : reader_(reader) { ++*this; }

    reference operator*() const { return *current_; }
    pointer operator->() const { return &*current_; }
    iterator& operator++() {
      current_ = reader_->next();
      if (!current_) reader_ = nullptr;
      return *this;
    }
    void operator++(int) { ++*this; }
    bool operator==(const iterator& other) const { return reader_ == other.reader_; }

   private:
    LogReader* reader_ = nullptr;
    std::optional<LogRecord> current_;
  };

  iterator begin() { return iterator(this); }
  iterator end() { return iterator(); }

 private:
  std::size_t read(std::byte* dst, std::size_t n) {
    in_.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    return static_cast<std::size_t>(in_.gcount());
  }

  std::istream& in_;
  std::uint64_t offset_ = 0;
  std::uint64_t count_ = 0;
};

struct ReplayResult {
  std::vector<LogRecord> records;
  std::optional<DecodeError> error;  // set when replay stopped on corruption
};

/// Reads records until end of stream or the first corrupt record.
inline ReplayResult replay(std::istream& in) {
  ReplayResult out;
  LogReader reader(in);
  try {
    while (auto rec = reader.next()) out.records.push_back(std::move(*rec));
  } catch (const DecodeError& e) {
    out.error = e;
  }
  return out;
}

}  // namespace fastcycle
