#pragma once

#include <random>

#include "nrf/tet_mesh.hpp"

namespace nrf::testing {

// Unit cube split into n^3 Kuhn-subdivided cells, interior nodes jittered,
// random nodal values for T steps and C components.
inline data::TetMesh box_mesh(int n, int T, int C, std::uint64_t seed, double jitter = 0.2) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jit(-jitter / n, jitter / n), u(-1.0, 1.0);
  data::TetMesh m;
  const int p = n + 1;
  m.nodes.resize(p * p * p, 3);
  auto id = [p](int i, int j, int k) { return (k * p + j) * p + i; };
  for (int k = 0; k < p; ++k)
    for (int j = 0; j < p; ++j)
      for (int i = 0; i < p; ++i) {
        Vec3 x(double(i) / n, double(j) / n, double(k) / n);
        for (int d = 0; d < 3; ++d) {
          const int c = d == 0 ? i : d == 1 ? j : k;
          if (c > 0 && c < n) x(d) += jit(rng);
        }
        m.nodes.row(id(i, j, k)) = x.transpose();
      }
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const int v[8] = {id(i, j, k),         id(i + 1, j, k),         id(i, j + 1, k),         id(i + 1, j + 1, k),
                          id(i, j, k + 1),     id(i + 1, j, k + 1),     id(i, j + 1, k + 1),     id(i + 1, j + 1, k + 1)};
        // Kuhn subdivision along the 0-7 diagonal.
        const int paths[6][2] = {{1, 3}, {1, 5}, {2, 3}, {2, 6}, {4, 5}, {4, 6}};
        for (const auto& q : paths) m.tets.push_back({v[0], v[q[0]], v[q[0] | q[1]], v[7]});
      }
  for (int t = 0; t < T; ++t) {
    Matrix val(m.nodes.rows(), C);
    for (Index r = 0; r < val.size(); ++r) val.data()[r] = u(rng);
    m.values.push_back(val);
  }
  data::check_and_orient(m);
  return m;
}

}  // namespace nrf::testing
