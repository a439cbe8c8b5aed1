#include "nrf/pgm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "nrf/binio.hpp"
#include "nrf/error.hpp"

namespace nrf::data {
namespace {

class HeaderScanner {
 public:
  HeaderScanner(std::string_view b, const std::string& src) : b_(b), src_(src) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(src_ + ": " + what + " at byte offset " + std::to_string(pos_));
  }

  void skip_space_and_comments() {
    while (pos_ < b_.size()) {
      const char c = b_[pos_];
      if (c == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n' && b_[pos_] != '\r') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  long integer(const char* what, long lo, long hi) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    long v = 0;
    while (pos_ < b_.size() && std::isdigit(static_cast<unsigned char>(b_[pos_]))) {
      v = v * 10 + (b_[pos_] - '0');
      if (v > hi) fail(std::string(what) + " out of range");
      ++pos_;
    }
    if (pos_ == start) {
      pos_ = start;
      fail(std::string("expected ") + what);
    }
    if (v < lo) {
      pos_ = start;
      fail(std::string(what) + " out of range");
    }
    return v;
  }

  std::size_t pos_ = 0;

 private:
  std::string_view b_;
  const std::string& src_;
};

}  // namespace

GreyImage parse_pgm(std::string_view b, const std::string& source) {
  HeaderScanner s(b, source);
  if (b.size() < 2 || b[0] != 'P' || (b[1] != '2' && b[1] != '5')) s.fail("expected magic P2 or P5");
  const bool binary = b[1] == '5';
  s.pos_ = 2;
  if (s.pos_ < b.size() && !std::isspace(static_cast<unsigned char>(b[s.pos_])) && b[s.pos_] != '#')
    s.fail("expected whitespace after magic");
  GreyImage img;
  img.width = static_cast<int>(s.integer("width", 1, 1 << 16));
  img.height = static_cast<int>(s.integer("height", 1, 1 << 16));
  const long maxval = s.integer("maxval", 1, 65535);
  const std::size_t n = static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height);
  img.pixels.resize(n);
  const double inv = 1.0 / static_cast<double>(maxval);
  if (binary) {
    if (s.pos_ >= b.size() || !std::isspace(static_cast<unsigned char>(b[s.pos_])))
      s.fail("expected single whitespace before raster");
    ++s.pos_;
    const std::size_t bps = maxval > 255 ? 2 : 1;
    if (b.size() - s.pos_ < n * bps) s.fail("raster truncated");
    for (std::size_t i = 0; i < n; ++i) {
      unsigned v;
      if (bps == 1) {
        v = static_cast<unsigned char>(b[s.pos_ + i]);
      } else {
        v = (static_cast<unsigned>(static_cast<unsigned char>(b[s.pos_ + 2 * i])) << 8) |
            static_cast<unsigned char>(b[s.pos_ + 2 * i + 1]);
      }
      if (v > static_cast<unsigned>(maxval)) {
        s.pos_ += i * bps;
        s.fail("sample exceeds maxval");
      }
      img.pixels[i] = v * inv;
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) img.pixels[i] = static_cast<double>(s.integer("sample", 0, maxval)) * inv;
  }
  return img;
}

GreyImage load_pgm(const std::filesystem::path& path) { return parse_pgm(io::read_file(path), path.string()); }

std::string encode_pgm(const GreyImage& img, int maxval, bool binary) {
  if (maxval < 1 || maxval > 65535) throw UsageError("pgm maxval must lie in [1, 65535]");
  std::string out = std::string(binary ? "P5" : "P2") + "\n" + std::to_string(img.width) + " " +
                    std::to_string(img.height) + "\n" + std::to_string(maxval) + "\n";
  std::size_t col = 0;
  for (double p : img.pixels) {
    const long v = std::lround(std::clamp(p, 0.0, 1.0) * maxval);
    if (binary) {
      if (maxval > 255) out.push_back(static_cast<char>((v >> 8) & 0xff));
      out.push_back(static_cast<char>(v & 0xff));
    } else {
      out += std::to_string(v);
      out.push_back(++col % 16 == 0 ? '\n' : ' ');
    }
  }
  if (!binary) out.push_back('\n');
  return out;
}

void save_pgm(const std::filesystem::path& path, const GreyImage& img, int maxval, bool binary) {
  io::write_file(path, encode_pgm(img, maxval, binary));
}

FieldDataset image_to_dataset(const GreyImage& img) {
  if (img.width <= 0 || img.height <= 0 || img.pixels.empty()) throw DataError("empty image");
  FieldDataset ds;
  const Index n = static_cast<Index>(img.pixels.size());
  ds.coords.resize(n, 2);
  ds.values.resize(n, 1);
  for (int j = 0; j < img.height; ++j) {
    for (int i = 0; i < img.width; ++i) {
      const Index r = static_cast<Index>(j) * img.width + i;
      ds.coords(r, 0) = (i + 0.5) / img.width;
      ds.coords(r, 1) = (j + 0.5) / img.height;
      ds.values(r, 0) = img.at(i, j);
    }
  }
  ds.coord_names = {"x", "y"};
  ds.value_names = {"I"};
  ds.lo = RowVector::Zero(2);
  ds.hi = RowVector::Ones(2);
  return ds;
}

}  // namespace nrf::data
