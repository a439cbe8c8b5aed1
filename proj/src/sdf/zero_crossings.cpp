#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>

#include "nrf/error.hpp"
#include "nrf/parallel.hpp"
#include "nrf/sdf.hpp"

namespace nrf::sdf {
namespace {

std::vector<double> eval_plane(const SdfFunction& f, int n, int k, int jobs) {
  const double h = 1.0 / (n - 1);
  const Index rows = static_cast<Index>(n) * n;
  Matrix P(rows, 3);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const Index r = static_cast<Index>(j) * n + i;
      P(r, 0) = i * h;
      P(r, 1) = j * h;
      P(r, 2) = k * h;
    }
  std::vector<double> out(static_cast<std::size_t>(rows));
  parallel_for(rows, jobs, [&](Index b, Index e) {
    Matrix y = f(P.middleRows(b, e - b));
    if (y.rows() != e - b || y.cols() < 1) throw ShapeError("SDF function returned " + shape_str(y));
    for (Index r = b; r < e; ++r) out[static_cast<std::size_t>(r)] = y(r - b, 0);
  });
  return out;
}

}  // namespace

CrossingSet extract_zero_crossings(const SdfFunction& f, int n, const TriMesh* mesh, int jobs) {
  if (n < 2) throw ConfigError("eval.grid", "grid size must be at least 2");
  const double h = 1.0 / (n - 1);
  std::vector<Vec3> pts;
  auto emit = [&](int i, int j, int k, int axis, double a, double b) {
    if (!(a * b < 0.0)) return;
    const double t = a / (a - b);
    Vec3 p(i * h, j * h, k * h);
    p(axis) = (std::array<int, 3>{i, j, k}[static_cast<std::size_t>(axis)] + t) * h;
    pts.push_back(p);
  };
  auto planar_edges = [&](const std::vector<double>& v, int i, int j, int k) {
    const std::size_t r = static_cast<std::size_t>(j) * n + i;
    if (i + 1 < n) emit(i, j, k, 0, v[r], v[r + 1]);
    if (j + 1 < n) emit(i, j, k, 1, v[r], v[r + static_cast<std::size_t>(n)]);
  };
  std::vector<double> prev = eval_plane(f, n, 0, jobs);
  for (int k = 1; k < n; ++k) {
    std::vector<double> cur = eval_plane(f, n, k, jobs);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        planar_edges(prev, i, j, k - 1);
        const std::size_t r = static_cast<std::size_t>(j) * n + i;
        emit(i, j, k - 1, 2, prev[r], cur[r]);
      }
    prev = std::move(cur);
  }
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) planar_edges(prev, i, j, n - 1);

  CrossingSet out;
  out.points.resize(static_cast<Index>(pts.size()), 3);
  for (std::size_t i = 0; i < pts.size(); ++i) out.points.row(static_cast<Index>(i)) = pts[i].transpose();
  if (pts.empty()) spdlog::warn("zero-crossing extraction: the field has no sign change on the {}^3 grid", n);
  if (mesh && !pts.empty()) out.distance = signed_distances(*mesh, out.points, jobs);
  return out;
}

DistanceStats distance_error_stats(const std::vector<double>& d, const UnitCubeTransform& tf, int bins) {
  if (d.empty()) throw DataError("distance statistics need at least one point");
  if (bins < 1) throw ConfigError("eval.bins", "must be at least 1");
  DistanceStats s;
  s.count = d.size();
  double sum = 0.0;
  for (double v : d) {
    sum += std::fabs(v);
    s.max_abs = std::max(s.max_abs, std::fabs(v));
  }
  s.mean_abs = sum / static_cast<double>(d.size());
  s.mean_abs_physical = tf.to_physical_length(s.mean_abs);
  s.max_abs_physical = tf.to_physical_length(s.max_abs);
  s.histogram.counts.assign(static_cast<std::size_t>(bins), 0);
  for (int b = 0; b <= bins; ++b) s.histogram.edges.push_back(s.max_abs * b / bins);
  for (double v : d) {
    int b = s.max_abs > 0.0 ? static_cast<int>(std::fabs(v) / s.max_abs * bins) : 0;
    ++s.histogram.counts[static_cast<std::size_t>(std::clamp(b, 0, bins - 1))];
  }
  return s;
}

}  // namespace nrf::sdf
