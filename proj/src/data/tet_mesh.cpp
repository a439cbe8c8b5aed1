#include "nrf/tet_mesh.hpp"

#include <memory>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "nrf/binio.hpp"
#include "nrf/error.hpp"

namespace nrf::data {
namespace {

constexpr char kMagic[8] = {'N', 'R', 'F', 'T', 'E', 'T', '1', '\0'};
constexpr double kBaryTol = 1e-10;

Vec3 node(const TetMesh& m, std::int32_t i) { return m.nodes.row(i).transpose(); }

}  // namespace

double tet_signed_volume(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  return (b - a).dot((c - a).cross(d - a)) / 6.0;
}

void check_and_orient(TetMesh& m) {
  if (m.nodes.cols() != 3) throw DataError("tet mesh nodes must have 3 columns");
  if (m.nodes.rows() == 0 || m.tets.empty()) throw DataError("tet mesh is empty");
  if (!m.nodes.allFinite()) throw DataError("tet mesh has non-finite node coordinates");
  const auto nn = static_cast<std::int32_t>(m.nodes.rows());
  for (std::size_t e = 0; e < m.tets.size(); ++e) {
    auto& t = m.tets[e];
    for (auto i : t)
      if (i < 0 || i >= nn)
        throw DataError("tet " + std::to_string(e) + " references node " + std::to_string(i) + " of " +
                        std::to_string(nn));
    const double v = tet_signed_volume(node(m, t[0]), node(m, t[1]), node(m, t[2]), node(m, t[3]));
    if (v == 0.0 || !std::isfinite(v)) throw DataError("tet " + std::to_string(e) + " has zero volume");
    if (v < 0.0) std::swap(t[2], t[3]);
  }
  for (std::size_t k = 0; k < m.values.size(); ++k)
    if (m.values[k].rows() != m.nodes.rows() || m.values[k].cols() != m.components())
      throw DataError("time step " + std::to_string(k) + " value block has shape " + shape_str(m.values[k]));
}

TetMesh parse_tetmesh(std::string_view b, const std::string& src) {
  try {
    io::ByteReader r(b, src);
    if (b.size() < 8 || std::memcmp(b.data(), kMagic, 8) != 0) r.fail("bad magic, expected NRFTET1");
    r.check_trailing_crc();
    r.bytes(8);
    const std::uint64_t nn = r.u32(), ne = r.u32(), nt = r.u32(), nc = r.u32();
    const std::uint64_t need = nn * 3 * 8 + ne * 4 * 4 + nt * nn * nc * 8 + 4;
    if (need != r.remaining())
      r.fail("header counts (" + std::to_string(nn) + ", " + std::to_string(ne) + ", " + std::to_string(nt) + ", " +
             std::to_string(nc) + ") do not match file size");
    TetMesh m;
    m.nodes.resize(static_cast<Index>(nn), 3);
    r.f64s(m.nodes.data(), static_cast<std::size_t>(nn * 3));
    m.tets.resize(static_cast<std::size_t>(ne));
    for (auto& t : m.tets)
      for (auto& i : t) i = r.i32();
    for (std::uint64_t k = 0; k < nt; ++k) {
      Matrix v(static_cast<Index>(nn), static_cast<Index>(nc));
      r.f64s(v.data(), static_cast<std::size_t>(nn * nc));
      m.values.push_back(std::move(v));
    }
    check_and_orient(m);
    return m;
  } catch (const CorruptFileError& e) {
    throw ParseError(e.what());
  }
}

TetMesh load_tetmesh(const std::filesystem::path& path) { return parse_tetmesh(io::read_file(path), path.string()); }

std::string encode_tetmesh(const TetMesh& m) {
  io::ByteWriter w;
  w.raw(kMagic, 8);
  w.u32(static_cast<std::uint32_t>(m.nodes.rows()));
  w.u32(static_cast<std::uint32_t>(m.tets.size()));
  w.u32(static_cast<std::uint32_t>(m.values.size()));
  w.u32(static_cast<std::uint32_t>(m.components()));
  w.f64s(m.nodes.data(), static_cast<std::size_t>(m.nodes.size()));
  for (const auto& t : m.tets)
    for (auto i : t) w.i32(i);
  for (const auto& v : m.values) w.f64s(v.data(), static_cast<std::size_t>(v.size()));
  w.crc();
  return w.data();
}

void save_tetmesh(const std::filesystem::path& path, const TetMesh& m) { io::write_file(path, encode_tetmesh(m)); }

FieldDataset tetmesh_to_dataset(const TetMesh& m, const std::vector<std::string>& value_names) {
  if (m.values.empty()) throw DataError("tet mesh carries no time steps");
  const int T = m.timesteps(), C = m.components();
  const Index nn = m.node_count();
  const bool timed = T > 1;
  FieldDataset ds;
  ds.coords.resize(nn * T, timed ? 4 : 3);
  ds.values.resize(nn * T, C);
  for (int k = 0; k < T; ++k) {
    ds.coords.block(k * nn, 0, nn, 3) = m.nodes;
    if (timed) ds.coords.block(k * nn, 3, nn, 1).setConstant(static_cast<double>(k));
    ds.values.middleRows(k * nn, nn) = m.values[static_cast<std::size_t>(k)];
  }
  ds.coord_names = {"x", "y", "z"};
  if (timed) {
    ds.coord_names.emplace_back("t");
    ds.time_column = 3;
  }
  if (!value_names.empty()) {
    if (static_cast<int>(value_names.size()) != C)
      throw DataError("tet mesh has " + std::to_string(C) + " components but " + std::to_string(value_names.size()) +
                      " names were given");
    ds.value_names = value_names;
  } else {
    for (int c = 0; c < C; ++c) ds.value_names.push_back("c" + std::to_string(c));
  }
  ds.mesh = std::make_shared<TetMesh>(m);
  ds.compute_box();
  return ds;
}

TetLocator::TetLocator(const TetMesh& m) : mesh_(&m) {
  lo_ = m.nodes.colwise().minCoeff().transpose();
  hi_ = m.nodes.colwise().maxCoeff().transpose();
  const auto ne = m.tets.size();
  res_ = std::max(1, static_cast<int>(std::lround(std::cbrt(static_cast<double>(ne)))));
  for (int k = 0; k < 3; ++k) {
    const double ext = hi_(k) - lo_(k);
    inv_cell_(k) = ext > 0.0 ? res_ / ext : 0.0;
  }
  bins_.resize(static_cast<std::size_t>(res_) * res_ * res_);
  inv_.resize(ne);
  auto cell = [&](double v, int k) {
    return std::clamp(static_cast<int>(std::floor((v - lo_(k)) * inv_cell_(k))), 0, res_ - 1);
  };
  for (std::size_t e = 0; e < ne; ++e) {
    const auto& t = m.tets[e];
    Vec3 a = node(m, t[0]);
    Eigen::Matrix3d J;
    J.col(0) = node(m, t[1]) - a;
    J.col(1) = node(m, t[2]) - a;
    J.col(2) = node(m, t[3]) - a;
    inv_[e] = J.inverse();
    Vec3 bl = a, bh = a;
    for (int i = 1; i < 4; ++i) {
      bl = bl.cwiseMin(node(m, t[i]));
      bh = bh.cwiseMax(node(m, t[i]));
    }
    // Pad by the containment tolerance so face points reach every candidate.
    const double pad = 1e-9 * (1.0 + (bh - bl).norm());
    int c0[3], c1[3];
    for (int k = 0; k < 3; ++k) {
      c0[k] = cell(bl(k) - pad, k);
      c1[k] = cell(bh(k) + pad, k);
    }
    for (int z = c0[2]; z <= c1[2]; ++z)
      for (int y = c0[1]; y <= c1[1]; ++y)
        for (int x = c0[0]; x <= c1[0]; ++x)
          bins_[(static_cast<std::size_t>(z) * res_ + y) * res_ + x].push_back(static_cast<int>(e));
  }
}

bool TetLocator::bary(int e, const Vec3& q, std::array<double, 4>& lam) const {
  const auto& t = mesh_->tets[static_cast<std::size_t>(e)];
  const Vec3 l = inv_[static_cast<std::size_t>(e)] * (q - node(*mesh_, t[0]));
  lam = {1.0 - l(0) - l(1) - l(2), l(0), l(1), l(2)};
  for (double v : lam)
    if (v < -kBaryTol) return false;
  return true;
}

std::optional<TetHit> TetLocator::locate(const Vec3& q) const {
  const double slack = 1e-9 * (1.0 + (hi_ - lo_).norm());
  int c[3];
  for (int k = 0; k < 3; ++k) {
    if (q(k) < lo_(k) - slack || q(k) > hi_(k) + slack) return std::nullopt;
    c[k] = std::clamp(static_cast<int>(std::floor((q(k) - lo_(k)) * inv_cell_(k))), 0, res_ - 1);
  }
  const auto& bin = bins_[(static_cast<std::size_t>(c[2]) * res_ + c[1]) * res_ + c[0]];
  TetHit hit;
  for (int e : bin) {
    if (bary(e, q, hit.lambda)) {
      hit.tet = e;
      return hit;
    }
  }
  return std::nullopt;
}

std::optional<RowVector> barycentric_interpolate(const TetMesh& m, const TetLocator& loc, const Matrix& nodal,
                                                 const Vec3& q) {
  if (nodal.rows() != m.node_count())
    throw ShapeError("nodal values " + shape_str(nodal) + " do not match " + std::to_string(m.node_count()) +
                     " nodes");
  auto hit = loc.locate(q);
  if (!hit) return std::nullopt;
  const auto& t = m.tets[static_cast<std::size_t>(hit->tet)];
  RowVector v = RowVector::Zero(nodal.cols());
  for (int i = 0; i < 4; ++i) v += hit->lambda[static_cast<std::size_t>(i)] * nodal.row(t[static_cast<std::size_t>(i)]);
  return v;
}

}  // namespace nrf::data
