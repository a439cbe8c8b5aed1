#include "nrf/point_field.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>

#include "nrf/binio.hpp"
#include "nrf/error.hpp"

namespace nrf::data {
namespace {

constexpr char kMagic[8] = {'N', 'R', 'F', 'P', 'T', 'S', '1', '\0'};
constexpr std::size_t kMaxColumns = 4096;

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f'; }

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && is_space(line[i])) ++i;
    const std::size_t s = i;
    while (i < line.size() && !is_space(line[i])) ++i;
    if (i > s) out.push_back(line.substr(s, i - s));
  }
  return out;
}

PointTable parse_text(std::string_view b, const std::string& src) {
  PointTable t;
  bool have_header = false;
  std::vector<double> vals;
  std::size_t line_no = 0, pos = 0, rows = 0;
  while (pos <= b.size()) {
    std::size_t end = b.find('\n', pos);
    if (end == std::string_view::npos) end = b.size();
    std::string_view line = b.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    auto toks = split_ws(line);
    if (toks.empty()) {
      if (end == b.size()) break;
      continue;
    }
    if (!have_header) {
      if (toks[0] != "#cols:")
        throw ParseError(src + ": line " + std::to_string(line_no) + ": expected header '#cols: ...'");
      for (std::size_t i = 1; i < toks.size(); ++i) {
        std::string name(toks[i]);
        if (std::find(t.names.begin(), t.names.end(), name) != t.names.end())
          throw ParseError(src + ": line " + std::to_string(line_no) + ": duplicate column '" + name + "'");
        t.names.push_back(std::move(name));
      }
      if (t.names.empty()) throw ParseError(src + ": line " + std::to_string(line_no) + ": header names no columns");
      if (t.names.size() > kMaxColumns) throw ParseError(src + ": too many columns");
      have_header = true;
      continue;
    }
    if (toks[0].front() == '#') continue;
    if (toks.size() != t.names.size())
      throw ParseError(src + ": line " + std::to_string(line_no) + ": expected " + std::to_string(t.names.size()) +
                       " values, got " + std::to_string(toks.size()));
    for (auto tok : toks) {
      double v;
      auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || p != tok.data() + tok.size())
        throw ParseError(src + ": line " + std::to_string(line_no) + ": bad number '" + std::string(tok) + "'");
      vals.push_back(v);
    }
    ++rows;
    if (end == b.size()) break;
  }
  if (!have_header) throw ParseError(src + ": missing '#cols:' header");
  t.data.resize(static_cast<Index>(rows), static_cast<Index>(t.names.size()));
  if (!vals.empty()) std::memcpy(t.data.data(), vals.data(), vals.size() * sizeof(double));
  return t;
}

PointTable parse_binary(std::string_view b, const std::string& src) {
  io::ByteReader r(b, src);
  r.check_trailing_crc();
  r.bytes(8);
  const std::uint32_t ncols = r.u32();
  const std::uint64_t nrows = r.u64();
  if (ncols == 0 || ncols > kMaxColumns) r.fail("bad column count " + std::to_string(ncols));
  PointTable t;
  for (std::uint32_t i = 0; i < ncols; ++i) t.names.push_back(r.str(256));
  if (nrows > (r.remaining() / 8) / ncols) r.fail("row count " + std::to_string(nrows) + " exceeds file size");
  t.data.resize(static_cast<Index>(nrows), ncols);
  r.f64s(t.data.data(), static_cast<std::size_t>(t.data.size()));
  if (r.remaining() != 4) r.fail("unexpected trailing bytes");
  return t;
}

}  // namespace

int PointTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i);
  return -1;
}

PointTable parse_point_table(std::string_view b, const std::string& source) {
  if (b.size() >= 8 && std::memcmp(b.data(), kMagic, 8) == 0) {
    try {
      return parse_binary(b, source);
    } catch (const CorruptFileError& e) {
      throw ParseError(e.what());
    }
  }
  return parse_text(b, source);
}

PointTable load_point_table(const std::filesystem::path& path) {
  return parse_point_table(io::read_file(path), path.string());
}

std::string encode_point_table(const PointTable& t, TableFormat fmt) {
  if (t.data.cols() != static_cast<Index>(t.names.size()))
    throw ShapeError("point table has " + std::to_string(t.names.size()) + " names for " + shape_str(t.data));
  if (fmt == TableFormat::Binary) {
    io::ByteWriter w;
    w.raw(kMagic, 8);
    w.u32(static_cast<std::uint32_t>(t.names.size()));
    w.u64(static_cast<std::uint64_t>(t.data.rows()));
    for (const auto& n : t.names) w.str(n);
    w.f64s(t.data.data(), static_cast<std::size_t>(t.data.size()));
    w.crc();
    return w.data();
  }
  std::string out = "#cols:";
  for (const auto& n : t.names) out += " " + n;
  out += "\n";
  char buf[64];
  for (Index r = 0; r < t.data.rows(); ++r) {
    for (Index c = 0; c < t.data.cols(); ++c) {
      auto res = std::to_chars(buf, buf + sizeof(buf), t.data(r, c));
      if (c) out.push_back(' ');
      out.append(buf, res.ptr);
    }
    out.push_back('\n');
  }
  return out;
}

void save_point_table(const std::filesystem::path& path, const PointTable& t, TableFormat fmt) {
  io::write_file(path, encode_point_table(t, fmt));
}

TableFormat format_for_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  return (ext == ".txt" || ext == ".tsv" || ext == ".dat") ? TableFormat::Text : TableFormat::Binary;
}

FieldDataset table_to_dataset(const PointTable& t, const std::vector<std::string>& value_columns) {
  FieldDataset ds;
  std::vector<int> cc, vc;
  for (const char* n : {"x", "y", "z", "t"}) {
    const int c = t.column(n);
    if (c >= 0) {
      cc.push_back(c);
      ds.coord_names.emplace_back(n);
    }
  }
  if (value_columns.empty()) {
    for (std::size_t i = 0; i < t.names.size(); ++i)
      if (std::find(cc.begin(), cc.end(), static_cast<int>(i)) == cc.end()) vc.push_back(static_cast<int>(i));
  } else {
    for (const auto& n : value_columns) {
      const int c = t.column(n);
      if (c < 0) throw DataError("point table has no column '" + n + "'");
      vc.push_back(c);
    }
  }
  if (cc.empty()) throw DataError("point table has no coordinate column (x, y, z or t)");
  if (vc.empty()) throw DataError("point table has no value column");
  for (int c : vc) ds.value_names.push_back(t.names[static_cast<std::size_t>(c)]);
  ds.coords.resize(t.data.rows(), static_cast<Index>(cc.size()));
  ds.values.resize(t.data.rows(), static_cast<Index>(vc.size()));
  for (std::size_t i = 0; i < cc.size(); ++i) ds.coords.col(static_cast<Index>(i)) = t.data.col(cc[i]);
  for (std::size_t i = 0; i < vc.size(); ++i) ds.values.col(static_cast<Index>(i)) = t.data.col(vc[i]);
  if (ds.coord_names.back() == "t") ds.time_column = static_cast<int>(cc.size()) - 1;
  ds.compute_box();
  ds.validate();
  return ds;
}

FieldDataset load_point_field(const std::filesystem::path& path, const std::vector<std::string>& value_columns) {
  return table_to_dataset(load_point_table(path), value_columns);
}

}  // namespace nrf::data
