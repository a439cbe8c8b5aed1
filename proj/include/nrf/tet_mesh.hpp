#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nrf/field_dataset.hpp"

namespace nrf::data {

struct TetMesh {
  Matrix nodes;  // Nn x 3
  std::vector<std::array<std::int32_t, 4>> tets;
  std::vector<Matrix> values;  // one (Nn x C) block per time step; step k sits at t = k

  Index node_count() const { return nodes.rows(); }
  int timesteps() const { return static_cast<int>(values.size()); }
  int components() const { return values.empty() ? 0 : static_cast<int>(values.front().cols()); }
};

double tet_signed_volume(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d);

// Checks indices and shapes, flips negatively oriented tets; zero-volume tets
// are rejected.
void check_and_orient(TetMesh& mesh);

// NRFTET1: magic, u32 Nn, Ne, T, C, nodes f64[Nn*3], tets i32[Ne*4],
// values f64[T*Nn*C], trailing CRC32.
TetMesh parse_tetmesh(std::string_view bytes, const std::string& source = "<memory>");
TetMesh load_tetmesh(const std::filesystem::path& path);
std::string encode_tetmesh(const TetMesh& mesh);
void save_tetmesh(const std::filesystem::path& path, const TetMesh& mesh);

// One record per node and step: coords (x, y, z[, t]), values per component.
FieldDataset tetmesh_to_dataset(const TetMesh& mesh, const std::vector<std::string>& value_names = {});

struct TetHit {
  int tet = -1;
  std::array<double, 4> lambda{};
};

// Uniform bin grid over tets (about cbrt(Ne) bins per axis). locate() returns
// the lowest-index tet whose barycentric coordinates are all >= -1e-10.
class TetLocator {
 public:
  explicit TetLocator(const TetMesh& mesh);
  std::optional<TetHit> locate(const Vec3& q) const;
  const Vec3& lo() const { return lo_; }
  const Vec3& hi() const { return hi_; }

 private:
  bool bary(int tet, const Vec3& q, std::array<double, 4>& lam) const;

  const TetMesh* mesh_;
  Vec3 lo_, hi_, inv_cell_;
  int res_ = 1;
  std::vector<std::vector<int>> bins_;
  std::vector<Eigen::Matrix3d> inv_;
};

// sum_i lambda_i v_i over the containing tet; nullopt when q is outside.
std::optional<RowVector> barycentric_interpolate(const TetMesh& mesh, const TetLocator& loc,
                                                 const Matrix& nodal_values, const Vec3& q);

}  // namespace nrf::data
