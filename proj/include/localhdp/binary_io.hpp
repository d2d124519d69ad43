#pragma once

// Little-endian byte streams, LEB128 varints and a checksummed file frame
// shared by the binary corpus, dictionary and snapshot formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "localhdp/errors.hpp"

namespace localhdp::io {

inline std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

class ByteWriter {
 public:
  void u8(std::uint8_t x) { buf_.push_back(x); }

  void u32(std::uint32_t x) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(x >> (8 * i)));
  }

  void u64(std::uint64_t x) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(x >> (8 * i)));
  }

  void f64(double x) { u64(std::bit_cast<std::uint64_t>(x)); }

  void varint(std::uint64_t x) {
    while (x >= 0x80) {
      buf_.push_back(static_cast<std::uint8_t>(x | 0x80));
      x >>= 7;
    }
    buf_.push_back(static_cast<std::uint8_t>(x));
  }

  void str(std::string_view s) {
    varint(s.size());
    buf_.insert(buf_.end(), s.begin(), s.end());
  }

  void raw(std::span<const std::uint8_t> bytes) { buf_.insert(buf_.end(), bytes.begin(), bytes.end()); }

  const std::vector<std::uint8_t>& bytes() const noexcept { return buf_; }
  std::vector<std::uint8_t> take() && { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }

  std::uint32_t u32() {
    need(4);
    std::uint32_t x = 0;
    for (int i = 0; i < 4; ++i) x |= std::uint32_t{bytes_[pos_++]} << (8 * i);
    return x;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t x = 0;
    for (int i = 0; i < 8; ++i) x |= std::uint64_t{bytes_[pos_++]} << (8 * i);
    return x;
  }

  double f64() { return std::bit_cast<double>(u64()); }

  std::uint64_t varint() {
    std::uint64_t x = 0;
    for (int shift = 0; shift < 64; shift += 7) {
      const std::uint8_t b = u8();
      x |= std::uint64_t{b & 0x7fu} << shift;
      if (!(b & 0x80)) return x;
    }
    throw IntegrityError("varint longer than 10 bytes at offset " + std::to_string(pos_));
  }

  std::string str() {
    const auto n = varint();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  std::span<const std::uint8_t> raw(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  bool at_end() const noexcept { return pos_ == bytes_.size(); }
  std::size_t offset() const noexcept { return pos_; }

 private:
  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_)
      throw IntegrityError("unexpected end of data at offset " + std::to_string(pos_));
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path);
}

/// Frame layout: 8-byte magic, u32 version, u64 payload length, payload,
/// u64 FNV-1a checksum of the payload. All integers little-endian.
inline std::vector<std::uint8_t> frame(std::string_view magic, std::uint32_t version,
                                       std::span<const std::uint8_t> payload) {
  ByteWriter w;
  w.raw({reinterpret_cast<const std::uint8_t*>(magic.data()), magic.size()});
  w.u32(version);
  w.u64(payload.size());
  w.raw(payload);
  w.u64(fnv1a64(payload));
  return std::move(w).take();
}

/// Validates the frame and returns a view of the payload.
inline std::span<const std::uint8_t> unframe(std::span<const std::uint8_t> bytes, std::string_view magic,
                                             std::uint32_t supported_version) {
  ByteReader r(bytes);
  auto m = r.raw(magic.size());
  if (std::memcmp(m.data(), magic.data(), magic.size()) != 0)
    throw IntegrityError("bad magic: expected " + std::string(magic));
  const auto version = r.u32();
  if (version != supported_version)
    throw UnsupportedVersionError("unsupported format version " + std::to_string(version) +
                                  " (this build reads version " + std::to_string(supported_version) + ")");
  const auto length = r.u64();
  if (length > bytes.size() - r.offset() || bytes.size() - r.offset() - length < 8)
    throw IntegrityError("truncated file: payload declares " + std::to_string(length) + " bytes");
  auto payload = r.raw(length);
  if (r.u64() != fnv1a64(payload)) throw IntegrityError("checksum mismatch");
  if (!r.at_end()) throw IntegrityError("trailing bytes after frame");
  return payload;
}

}  // namespace localhdp::io
