#include "nrf/binio.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <sstream>

#include "nrf/error.hpp"

namespace nrf::io {

std::uint32_t crc32(std::string_view bytes) {
  uLong c = ::crc32(0L, Z_NULL, 0);
  const auto* p = reinterpret_cast<const Bytef*>(bytes.data());
  std::size_t left = bytes.size();
  while (left > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(left, 1u << 30));
    c = ::crc32(c, p, chunk);
    p += chunk;
    left -= chunk;
  }
  return static_cast<std::uint32_t>(c);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw DataError("read failed for '" + path.string() + "'");
  return std::move(ss).str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + tmp.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

void ByteWriter::str(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  bytes(s);
}

void ByteWriter::crc() { u32(crc32(buf_)); }

void ByteReader::fail(const std::string& what) const {
  throw CorruptFileError(source_ + ": " + what + " at byte " + std::to_string(pos_));
}

void ByteReader::need(std::size_t n) {
  if (n > data_.size() - pos_) fail("truncated (need " + std::to_string(n) + " bytes)");
}

std::uint8_t ByteReader::u8() {
  need(1);
  return static_cast<std::uint8_t>(data_[pos_++]);
}

#define NRF_READ_POD(NAME, TYPE)      \
  TYPE ByteReader::NAME() {           \
    need(sizeof(TYPE));               \
    TYPE v;                           \
    std::memcpy(&v, data_.data() + pos_, sizeof(TYPE)); \
    pos_ += sizeof(TYPE);             \
    return v;                         \
  }

NRF_READ_POD(u32, std::uint32_t)
NRF_READ_POD(i32, std::int32_t)
NRF_READ_POD(u64, std::uint64_t)
NRF_READ_POD(f64, double)

#undef NRF_READ_POD

void ByteReader::f64s(double* out, std::size_t n) {
  if (n > (data_.size() - pos_) / 8) fail("truncated (need " + std::to_string(n) + " reals)");
  std::memcpy(out, data_.data() + pos_, 8 * n);
  pos_ += 8 * n;
}

std::string_view ByteReader::bytes(std::size_t n) {
  need(n);
  std::string_view v = data_.substr(pos_, n);
  pos_ += n;
  return v;
}

std::string ByteReader::str(std::size_t max_len) {
  const std::uint32_t n = u32();
  if (n > max_len) fail("string length " + std::to_string(n) + " exceeds limit");
  return std::string(bytes(n));
}

void ByteReader::check_trailing_crc() const {
  if (data_.size() < 4) throw CorruptFileError(source_ + ": too short for a checksum");
  std::uint32_t stored;
  std::memcpy(&stored, data_.data() + data_.size() - 4, 4);
  const std::uint32_t actual = crc32(data_.substr(0, data_.size() - 4));
  if (stored != actual) throw CorruptFileError(source_ + ": CRC mismatch");
}

}  // namespace nrf::io
