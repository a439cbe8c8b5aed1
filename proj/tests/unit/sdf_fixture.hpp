#pragma once

#include <cmath>
#include <numbers>
#include <random>

#include "nrf/sdf.hpp"

namespace nrf::testing {

using sdf::TriMesh;

inline TriMesh torus(double R, double r, int nu, int nv) {
  std::vector<Vec3> v;
  std::vector<std::array<int, 3>> f;
  for (int i = 0; i < nu; ++i)
    for (int j = 0; j < nv; ++j) {
      const double u = 2 * std::numbers::pi * i / nu, w = 2 * std::numbers::pi * j / nv;
      v.emplace_back(0.5 + (R + r * std::cos(w)) * std::cos(u), 0.5 + (R + r * std::cos(w)) * std::sin(u),
                     0.5 + r * std::sin(w));
    }
  auto id = [&](int i, int j) { return (i % nu) * nv + (j % nv); };
  for (int i = 0; i < nu; ++i)
    for (int j = 0; j < nv; ++j) {
      const int a = id(i, j), b = id(i + 1, j), c = id(i + 1, j + 1), d = id(i, j + 1);
      f.push_back({a, b, c});
      f.push_back({a, c, d});
    }
  return TriMesh(std::move(v), std::move(f));
}

inline double enclosed_volume(const TriMesh& m) {
  double vol = 0.0;
  for (const auto& t : m.triangles())
    vol += m.vertices()[t[0]].dot(m.vertices()[t[1]].cross(m.vertices()[t[2]])) / 6.0;
  return vol;
}

// Moller-Trumbore hit count along a ray; independent of the distance code.
inline int ray_hits(const TriMesh& m, const Vec3& o, const Vec3& dir) {
  int hits = 0;
  for (const auto& t : m.triangles()) {
    const Vec3 &a = m.vertices()[t[0]], &b = m.vertices()[t[1]], &c = m.vertices()[t[2]];
    const Vec3 e1 = b - a, e2 = c - a, p = dir.cross(e2);
    const double det = e1.dot(p);
    if (std::fabs(det) < 1e-15) continue;
    const Vec3 s = o - a;
    const double u = s.dot(p) / det;
    if (u < 0.0 || u > 1.0) continue;
    const Vec3 q = s.cross(e1);
    const double v = dir.dot(q) / det;
    if (v < 0.0 || u + v > 1.0) continue;
    if (e2.dot(q) / det > 0.0) ++hits;
  }
  return hits;
}

inline bool parity_inside(const TriMesh& m, const Vec3& q, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  int inside = 0;
  for (int k = 0; k < 3; ++k) {
    Vec3 d(g(rng), g(rng), g(rng));
    inside += ray_hits(m, q, d.normalized()) % 2;
  }
  return inside >= 2;
}

}  // namespace nrf::testing
