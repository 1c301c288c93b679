#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "ecodrive/errors.hpp"

namespace ecodrive {

static_assert(std::endian::native == std::endian::little,
              "binary formats are written in host order and assume little-endian");

/// 64-bit FNV-1a, used as the trailing checksum of the value-function and model formats.
class Fnv1a64 {
 public:
  void update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      hash_ ^= p[i];
      hash_ *= 0x100000001b3ULL;
    }
  }
  void update(std::string_view s) { update(s.data(), s.size()); }
  std::uint64_t digest() const { return hash_; }

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t fnv1a64(std::string_view s) {
  Fnv1a64 h;
  h.update(s);
  return h.digest();
}

/// Streaming writer that hashes everything it emits. `finish()` appends
/// the checksum; a writer destroyed before that leaves a truncated file
/// that every reader rejects.
class BinaryWriter {
 public:
  explicit BinaryWriter(const std::string& path)
      : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw IoError("cannot open '" + path + "' for writing");
  }

  template <typename T>
  void put(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    raw(&value, sizeof(T));
  }
  void put_bytes(std::string_view s) { raw(s.data(), s.size()); }
  template <typename T>
  void put_span(std::span<const T> values) {
    static_assert(std::is_trivially_copyable_v<T>);
    raw(values.data(), values.size_bytes());
  }
  template <typename T>
  void put_span(std::span<T> values) {
    put_span(std::span<const T>(values));
  }
  /// Bytes written so far.
  std::size_t size() const { return size_; }

  /// Closes without a checksum (for formats that carry none).
  void close() {
    out_.close();
    if (!out_) throw IoError("write failed for '" + path_ + "'");
  }

  void finish() {
    const std::uint64_t digest = hash_.digest();
    out_.write(reinterpret_cast<const char*>(&digest), sizeof(digest));
    size_ += sizeof(digest);
    out_.close();
    if (!out_) throw IoError("write failed for '" + path_ + "'");
  }

 private:
  void raw(const void* p, std::size_t n) {
    hash_.update(p, n);
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    size_ += n;
    if (!out_) throw IoError("write failed for '" + path_ + "'");
  }

  std::string path_;
  std::ofstream out_;
  Fnv1a64 hash_;
  std::size_t size_ = 0;
};

/// Streaming reader that hashes what it consumes. `verify_checksum()` must
/// be called once the body has been read (or skipped).
class BinaryReader {
 public:
  explicit BinaryReader(const std::string& path, bool has_checksum = true)
      : path_(path), in_(path, std::ios::binary | std::ios::ate) {
    if (!in_) throw IoError("cannot open '" + path + "'");
    size_ = static_cast<std::size_t>(in_.tellg());
    in_.seekg(0);
    trailer_ = has_checksum ? sizeof(std::uint64_t) : 0;
    if (size_ < trailer_) throw FormatError("'" + path + "' is truncated");
  }

  template <typename T>
  T get() {
    static_assert(std::is_trivially_copyable_v<T>);
    T value;
    raw(&value, sizeof(T));
    return value;
  }
  std::string get_bytes(std::size_t n) {
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }
  template <typename T>
  void get_span(std::span<T> out) {
    static_assert(std::is_trivially_copyable_v<T>);
    raw(out.data(), out.size_bytes());
  }
  /// Consumes and hashes the body up to the checksum.
  void skip_to_checksum() {
    std::vector<char> chunk(1 << 20);
    while (remaining() > 0) {
      const std::size_t n = std::min(chunk.size(), remaining());
      raw(chunk.data(), n);
    }
  }

  void expect_magic(std::string_view magic) {
    if (get_bytes(magic.size()) != magic) {
      throw FormatError("'" + path_ + "' is not a " + std::string(magic) + " file");
    }
  }
  /// Reads the trailing checksum; the body must be fully consumed.
  void verify_checksum() {
    if (remaining() != 0) throw FormatError("'" + path_ + "' has unexpected trailing data");
    const std::uint64_t digest = hash_.digest();
    std::uint64_t stored = 0;
    in_.read(reinterpret_cast<char*>(&stored), sizeof(stored));
    if (!in_ || stored != digest) throw FormatError("checksum mismatch in '" + path_ + "'");
  }

  /// Total file size including the checksum.
  std::size_t size() const { return size_; }
  std::size_t position() const { return pos_; }
  /// Body bytes left before the checksum.
  std::size_t remaining() const { return size_ - trailer_ - pos_; }
  const std::string& path() const { return path_; }

 private:
  void raw(void* p, std::size_t n) {
    if (n > remaining()) throw FormatError("'" + path_ + "' is truncated");
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in_) throw FormatError("'" + path_ + "' is truncated");
    hash_.update(p, n);
    pos_ += n;
  }

  std::string path_;
  std::ifstream in_;
  Fnv1a64 hash_;
  std::size_t size_ = 0;
  std::size_t trailer_ = 0;
  std::size_t pos_ = 0;
};

}  // namespace ecodrive
