#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace csirope::util {

/// Little-endian encoder independent of host byte order.
class ByteWriter {
 public:
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);
  void bytes(std::string_view s);
  // u32 length followed by the bytes.
  void prefixed(std::string_view s);

  std::vector<std::uint8_t>& buffer() { return buf_; }
  const std::vector<std::uint8_t>& buffer() const { return buf_; }
  std::size_t size() const { return buf_.size(); }

 private:
  std::vector<std::uint8_t> buf_;
};

/// Bounds-checked little-endian decoder; throws FormatError on truncation.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  std::string bytes(std::size_t n);
  std::string prefixed();
  std::span<const std::uint8_t> view(std::size_t n);

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const;
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32(std::span<const std::uint8_t> data);

std::vector<std::uint8_t> read_binary_file(const std::string& path);
// Refuses to replace an existing file unless `force` is set.
void write_binary_file(const std::string& path, std::span<const std::uint8_t> data, bool force);

}  // namespace csirope::util
