#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace nrf::io {

std::uint32_t crc32(std::string_view bytes);

std::string read_file(const std::filesystem::path& path);
// Writes to a sibling temporary, then renames over path.
void write_file(const std::filesystem::path& path, std::string_view bytes);

class ByteWriter {
 public:
  void u8(std::uint8_t v) { raw(&v, 1); }
  void u32(std::uint32_t v) { raw(&v, 4); }
  void i32(std::int32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void f64(double v) { raw(&v, 8); }
  void f64s(const double* v, std::size_t n) { raw(v, 8 * n); }
  void bytes(std::string_view s) { buf_.append(s); }
  // u32 length prefix followed by the bytes.
  void str(std::string_view s);
  void raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  // Appends the CRC32 of everything written so far.
  void crc();

  const std::string& data() const { return buf_; }
  std::size_t size() const { return buf_.size(); }

 private:
  std::string buf_;
};

// Bounds-checked reader. Running past the end throws CorruptFileError naming
// the source and the byte offset.
class ByteReader {
 public:
  ByteReader(std::string_view data, std::string source) : data_(data), source_(std::move(source)) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::int32_t i32();
  std::uint64_t u64();
  double f64();
  void f64s(double* out, std::size_t n);
  std::string_view bytes(std::size_t n);
  std::string str(std::size_t max_len = 1u << 26);

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }
  const std::string& source() const { return source_; }
  // Verifies that the final 4 bytes hold the CRC32 of everything before them.
  void check_trailing_crc() const;
  [[noreturn]] void fail(const std::string& what) const;

 private:
  void need(std::size_t n);
  std::string_view data_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace nrf::io
