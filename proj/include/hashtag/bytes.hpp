#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hashtag/error.hpp"

namespace hashtag {

// Little-endian encoder for the project's binary artifact formats.
class ByteWriter {
 public:
  void magic(std::string_view tag) {
    for (char c : tag) buf_.push_back(static_cast<std::uint8_t>(c));
  }
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) { put(v); }
  void u32(std::uint32_t v) { put(v); }
  void u64(std::uint64_t v) { put(v); }
  void i8(std::int8_t v) { buf_.push_back(static_cast<std::uint8_t>(v)); }
  void f32(float v) { put(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v)); }
  void bytes(std::span<const std::uint8_t> b) {
    buf_.insert(buf_.end(), b.begin(), b.end());
  }

  const std::vector<std::uint8_t>& data() const& { return buf_; }
  std::vector<std::uint8_t> take() && { return std::move(buf_); }

 private:
  template <typename T>
  void put(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
  }

  std::vector<std::uint8_t> buf_;
};

// Bounds-checked little-endian decoder. Every read past the end throws
// FormatError, so callers never observe a partially decoded artifact.
class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> data, std::string what)
      : data_(data), what_(std::move(what)) {}

  void expect_magic(std::string_view tag) {
    need(tag.size());
    if (std::memcmp(data_.data() + pos_, tag.data(), tag.size()) != 0) {
      throw FormatError(what_ + ": bad magic, expected \"" + std::string(tag) +
                        "\"");
    }
    pos_ += tag.size();
  }
  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  std::uint16_t u16() { return get<std::uint16_t>(); }
  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  std::int8_t i8() { return static_cast<std::int8_t>(u8()); }
  float f32() { return std::bit_cast<float>(get<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(get<std::uint64_t>()); }
  std::vector<std::uint8_t> bytes(std::size_t n) {
    need(n);
    std::vector<std::uint8_t> out(data_.begin() + pos_,
                                  data_.begin() + pos_ + n);
    pos_ += n;
    return out;
  }

  std::size_t remaining() const { return data_.size() - pos_; }
  void expect_end() const {
    if (remaining() != 0) {
      throw FormatError(what_ + ": " + std::to_string(remaining()) +
                        " trailing bytes");
    }
  }
  [[noreturn]] void fail(const std::string& msg) const {
    throw FormatError(what_ + ": " + msg);
  }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) fail("truncated");
  }
  template <typename T>
  T get() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<T>(static_cast<T>(data_[pos_ + i]) << (8 * i));
    }
    pos_ += sizeof(T);
    return v;
  }

  std::span<const std::uint8_t> data_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path,
                std::span<const std::uint8_t> bytes);

}  // namespace hashtag
