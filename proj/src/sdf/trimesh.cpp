#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <map>
#include <numeric>
#include <sstream>

#include "nrf/binio.hpp"
#include "nrf/error.hpp"
#include "nrf/sdf.hpp"

namespace nrf::sdf {
namespace {

constexpr int kLeafSize = 8;

double angle_at(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 u = a - p, v = b - p;
  const double nu = u.norm(), nv = v.norm();
  if (nu == 0.0 || nv == 0.0) return 0.0;
  return std::acos(std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0));
}

Vec3 normalized_or_zero(const Vec3& v) {
  const double n = v.norm();
  return n > 0.0 ? Vec3(v / n) : Vec3::Zero();
}

// Exact-coordinate vertex welding shared by the loaders.
class Welder {
 public:
  int add(const Vec3& p) {
    auto [it, fresh] = ids_.try_emplace({p(0), p(1), p(2)}, static_cast<int>(verts_.size()));
    if (fresh) verts_.push_back(p);
    return it->second;
  }
  std::vector<Vec3> take() { return std::move(verts_); }

 private:
  std::map<std::array<double, 3>, int> ids_;
  std::vector<Vec3> verts_;
};

bool parse_double(std::string_view tok, double& v) {
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  return ec == std::errc() && p == tok.data() + tok.size() && std::isfinite(v);
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t b = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > b) out.push_back(line.substr(b, i - b));
  }
  return out;
}

TriMesh parse_stl_ascii(std::string_view text, const std::string& src) {
  Welder weld;
  std::vector<std::array<int, 3>> tris;
  std::vector<int> loop;
  bool in_loop = false;
  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    std::size_t e = text.find('\n', pos);
    if (e == std::string_view::npos) e = text.size();
    ++line_no;
    auto tok = split_ws(text.substr(pos, e - pos));
    pos = e + 1;
    if (tok.empty()) continue;
    auto fail = [&](const std::string& what) {
      throw ParseError(src + ": line " + std::to_string(line_no) + ": " + what);
    };
    if (tok[0] == "outer") {
      if (in_loop) fail("nested 'outer loop'");
      in_loop = true;
      loop.clear();
    } else if (tok[0] == "vertex") {
      if (!in_loop) fail("vertex outside a loop");
      Vec3 p;
      if (tok.size() != 4) fail("vertex needs 3 coordinates");
      for (int d = 0; d < 3; ++d)
        if (!parse_double(tok[static_cast<std::size_t>(d + 1)], p(d))) fail("bad coordinate");
      loop.push_back(weld.add(p));
    } else if (tok[0] == "endloop") {
      if (!in_loop) fail("'endloop' without 'outer loop'");
      if (loop.size() != 3) fail("facet has " + std::to_string(loop.size()) + " vertices, only triangles are supported");
      tris.push_back({loop[0], loop[1], loop[2]});
      in_loop = false;
    }
  }
  if (in_loop) throw ParseError(src + ": unterminated facet");
  return TriMesh(weld.take(), std::move(tris));
}

TriMesh parse_stl_binary(std::string_view b, const std::string& src) {
  io::ByteReader r(b, src);
  r.bytes(80);
  const std::uint32_t n = r.u32();
  Welder weld;
  std::vector<std::array<int, 3>> tris;
  tris.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    auto f32 = [&] {
      const std::string_view s = r.bytes(4);
      float f;
      std::memcpy(&f, s.data(), 4);
      return static_cast<double>(f);
    };
    for (int k = 0; k < 3; ++k) f32();
    std::array<int, 3> t{};
    for (int k = 0; k < 3; ++k) {
      Vec3 p;
      for (int d = 0; d < 3; ++d) p(d) = f32();
      if (!p.allFinite()) r.fail("non-finite vertex");
      t[static_cast<std::size_t>(k)] = weld.add(p);
    }
    r.bytes(2);
    tris.push_back(t);
  }
  return TriMesh(weld.take(), std::move(tris));
}

}  // namespace

TriMesh::TriMesh(std::vector<Vec3> vertices, std::vector<std::array<int, 3>> triangles)
    : v_(std::move(vertices)), f_(std::move(triangles)) {
  if (v_.empty() || f_.empty()) throw DataError("triangle mesh is empty");
  const int nv = static_cast<int>(v_.size());
  for (const auto& t : f_)
    for (int i : t)
      if (i < 0 || i >= nv) throw DataError("triangle index " + std::to_string(i) + " out of range");
  for (const auto& p : v_)
    if (!p.allFinite()) throw DataError("triangle mesh has non-finite vertices");

  const std::size_t nt = f_.size();
  fn_.resize(nt);
  area_.resize(nt);
  cum_area_.resize(nt);
  vn_.assign(v_.size(), Vec3::Zero());
  double acc = 0.0;
  for (std::size_t t = 0; t < nt; ++t) {
    const Vec3 &a = v_[f_[t][0]], &b = v_[f_[t][1]], &c = v_[f_[t][2]];
    const Vec3 cr = (b - a).cross(c - a);
    area_[t] = 0.5 * cr.norm();
    fn_[t] = normalized_or_zero(cr);
    acc += area_[t];
    cum_area_[t] = acc;
    vn_[f_[t][0]] += angle_at(a, b, c) * fn_[t];
    vn_[f_[t][1]] += angle_at(b, c, a) * fn_[t];
    vn_[f_[t][2]] += angle_at(c, a, b) * fn_[t];
  }
  if (!(acc > 0.0)) throw DataError("triangle mesh has zero total area");
  for (auto& n : vn_) n = normalized_or_zero(n);

  std::map<std::pair<int, int>, int> directed;
  std::map<std::pair<int, int>, Vec3> undirected;
  for (std::size_t t = 0; t < nt; ++t)
    for (int e = 0; e < 3; ++e) {
      const int a = f_[t][static_cast<std::size_t>(e)], b = f_[t][static_cast<std::size_t>((e + 1) % 3)];
      ++directed[{a, b}];
      auto& n = undirected.try_emplace({std::min(a, b), std::max(a, b)}, Vec3::Zero()).first->second;
      n += fn_[t];
    }
  watertight_ = true;
  for (const auto& [e, count] : directed) {
    auto rev = directed.find({e.second, e.first});
    if (count != 1 || rev == directed.end() || rev->second != 1) {
      watertight_ = false;
      break;
    }
  }
  en_.resize(nt);
  for (std::size_t t = 0; t < nt; ++t)
    for (int e = 0; e < 3; ++e) {
      const int a = f_[t][static_cast<std::size_t>(e)], b = f_[t][static_cast<std::size_t>((e + 1) % 3)];
      en_[t][static_cast<std::size_t>(e)] = normalized_or_zero(undirected.at({std::min(a, b), std::max(a, b)}));
    }
  for (const auto& p : v_) bounds_.grow(p);
  build_bvh();
}

void TriMesh::build_bvh() {
  const int nt = static_cast<int>(f_.size());
  order_.resize(static_cast<std::size_t>(nt));
  std::iota(order_.begin(), order_.end(), 0);
  std::vector<Vec3> centroid(static_cast<std::size_t>(nt));
  std::vector<Aabb> box(static_cast<std::size_t>(nt));
  for (int t = 0; t < nt; ++t) {
    for (int i : f_[static_cast<std::size_t>(t)]) box[static_cast<std::size_t>(t)].grow(v_[static_cast<std::size_t>(i)]);
    centroid[static_cast<std::size_t>(t)] = (v_[f_[t][0]] + v_[f_[t][1]] + v_[f_[t][2]]) / 3.0;
  }
  nodes_.clear();
  nodes_.reserve(static_cast<std::size_t>(2 * nt / kLeafSize + 2));
  struct Job {
    int node, start, count;
  };
  std::vector<Job> stack;
  nodes_.emplace_back();
  stack.push_back({0, 0, nt});
  while (!stack.empty()) {
    const Job j = stack.back();
    stack.pop_back();
    Aabb nb, cb;
    for (int i = j.start; i < j.start + j.count; ++i) {
      const auto t = static_cast<std::size_t>(order_[static_cast<std::size_t>(i)]);
      nb.grow(box[t].lo);
      nb.grow(box[t].hi);
      cb.grow(centroid[t]);
    }
    nodes_[static_cast<std::size_t>(j.node)].box = nb;
    if (j.count <= kLeafSize) {
      nodes_[static_cast<std::size_t>(j.node)].start = j.start;
      nodes_[static_cast<std::size_t>(j.node)].count = j.count;
      continue;
    }
    int axis;
    (cb.hi - cb.lo).maxCoeff(&axis);
    const int mid = j.start + j.count / 2;
    auto first = order_.begin() + j.start;
    std::nth_element(first, order_.begin() + mid, first + j.count, [&](int a, int b) {
      const double ca = centroid[static_cast<std::size_t>(a)](axis), cbv = centroid[static_cast<std::size_t>(b)](axis);
      return ca < cbv || (ca == cbv && a < b);
    });
    const int left = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    nodes_.emplace_back();
    nodes_[static_cast<std::size_t>(j.node)].left = left;
    nodes_[static_cast<std::size_t>(j.node)].right = left + 1;
    stack.push_back({left, j.start, mid - j.start});
    stack.push_back({left + 1, mid, j.start + j.count - mid});
  }
}

TriMesh parse_obj(std::string_view text, const std::string& src) {
  std::vector<Vec3> raw;
  std::vector<std::array<int, 3>> faces;
  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    std::size_t e = text.find('\n', pos);
    if (e == std::string_view::npos) e = text.size();
    ++line_no;
    auto tok = split_ws(text.substr(pos, e - pos));
    pos = e + 1;
    if (tok.empty()) continue;
    auto fail = [&](const std::string& what) {
      throw ParseError(src + ": line " + std::to_string(line_no) + ": " + what);
    };
    if (tok[0] == "v") {
      if (tok.size() < 4) fail("vertex needs 3 coordinates");
      Vec3 p;
      for (int d = 0; d < 3; ++d)
        if (!parse_double(tok[static_cast<std::size_t>(d + 1)], p(d))) fail("bad coordinate");
      raw.push_back(p);
    } else if (tok[0] == "f") {
      if (tok.size() != 4)
        fail("face has " + std::to_string(tok.size() - 1) + " vertices, only triangles are supported");
      std::array<int, 3> f{};
      for (int k = 0; k < 3; ++k) {
        std::string_view s = tok[static_cast<std::size_t>(k + 1)];
        s = s.substr(0, s.find('/'));
        long idx = 0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), idx);
        if (ec != std::errc() || p != s.data() + s.size() || idx == 0) fail("bad face index");
        const long n = static_cast<long>(raw.size());
        const long z = idx > 0 ? idx - 1 : n + idx;
        if (z < 0 || z >= n) fail("face index out of range");
        f[static_cast<std::size_t>(k)] = static_cast<int>(z);
      }
      faces.push_back(f);
    }
  }
  Welder weld;
  std::vector<int> remap(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) remap[i] = weld.add(raw[i]);
  for (auto& f : faces)
    for (int& i : f) i = remap[static_cast<std::size_t>(i)];
  if (faces.empty()) throw ParseError(src + ": no faces");
  return TriMesh(weld.take(), std::move(faces));
}

TriMesh parse_stl(std::string_view b, const std::string& src) {
  if (b.size() >= 84) {
    std::uint32_t n;
    std::memcpy(&n, b.data() + 80, 4);
    if (84 + 50 * static_cast<std::uint64_t>(n) == b.size()) {
      try {
        return parse_stl_binary(b, src);
      } catch (const CorruptFileError& e) {
        throw ParseError(e.what());
      }
    }
  }
  if (b.substr(0, std::min<std::size_t>(b.size(), 64)).find("solid") == std::string_view::npos)
    throw ParseError(src + ": neither ASCII nor binary STL");
  return parse_stl_ascii(b, src);
}

TriMesh load_trimesh(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  const std::string bytes = io::read_file(path);
  if (ext == ".obj") return parse_obj(bytes, path.string());
  if (ext == ".stl") return parse_stl(bytes, path.string());
  throw DataError(path.string() + ": unsupported mesh extension '" + ext + "' (expected .obj or .stl)");
}

std::string encode_obj(const TriMesh& m) {
  std::ostringstream os;
  os.precision(17);
  for (const auto& p : m.vertices()) os << "v " << p(0) << ' ' << p(1) << ' ' << p(2) << '\n';
  for (const auto& t : m.triangles()) os << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  return os.str();
}

void save_obj(const std::filesystem::path& path, const TriMesh& m) { io::write_file(path, encode_obj(m)); }

TriMesh make_icosphere(double radius, int subdivisions, const Vec3& center) {
  const double g = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, g, 0}, {1, g, 0}, {-1, -g, 0}, {1, -g, 0}, {0, -1, g}, {0, 1, g},
                         {0, -1, -g}, {0, 1, -g}, {g, 0, -1}, {g, 0, 1}, {-g, 0, -1}, {-g, 0, 1}};
  for (auto& p : v) p.normalize();
  std::vector<std::array<int, 3>> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                                       {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                                       {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                                       {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> mid;
    auto midpoint = [&](int a, int b) {
      auto key = std::make_pair(std::min(a, b), std::max(a, b));
      auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      v.push_back((v[static_cast<std::size_t>(a)] + v[static_cast<std::size_t>(b)]).normalized());
      const int id = static_cast<int>(v.size()) - 1;
      mid.emplace(key, id);
      return id;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(f.size() * 4);
    for (const auto& t : f) {
      const int a = midpoint(t[0], t[1]), b = midpoint(t[1], t[2]), c = midpoint(t[2], t[0]);
      next.push_back({t[0], a, c});
      next.push_back({t[1], b, a});
      next.push_back({t[2], c, b});
      next.push_back({a, b, c});
    }
    f = std::move(next);
  }
  for (auto& p : v) p = center + radius * p;
  return TriMesh(std::move(v), std::move(f));
}

std::pair<TriMesh, UnitCubeTransform> rescale_to_unit_cube(const TriMesh& m) {
  const Aabb b = m.bounds();
  const double ext = (b.hi - b.lo).maxCoeff();
  if (!(ext > 0.0)) throw DataError("mesh bounding box has zero extent");
  UnitCubeTransform tf;
  tf.scale = 1.0 / ext;
  tf.center = 0.5 * (b.lo + b.hi);
  std::vector<Vec3> v;
  v.reserve(m.vertex_count());
  for (const auto& p : m.vertices()) v.push_back(tf.apply(p));
  return {TriMesh(std::move(v), m.triangles()), tf};
}

}  // namespace nrf::sdf
