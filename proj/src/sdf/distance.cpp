#include <algorithm>
#include <cmath>

#include "nrf/parallel.hpp"
#include "nrf/sdf.hpp"

namespace nrf::sdf {
namespace {

ClosestPoint on_segment(const Vec3& q, const Vec3& a, const Vec3& b, int edge, int va, int vb) {
  ClosestPoint r;
  const Vec3 ab = b - a;
  const double len2 = ab.squaredNorm();
  const double s = len2 > 0.0 ? std::clamp((q - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  if (s <= 0.0) {
    r.point = a;
    r.feature = Feature::Vertex;
    r.index = va;
  } else if (s >= 1.0) {
    r.point = b;
    r.feature = Feature::Vertex;
    r.index = vb;
  } else {
    r.point = a + s * ab;
    r.feature = Feature::Edge;
    r.index = edge;
  }
  r.sq_dist = (q - r.point).squaredNorm();
  return r;
}

void consider(const TriMesh& m, const Vec3& q, int t, ClosestPoint& best) {
  const auto& f = m.triangles()[static_cast<std::size_t>(t)];
  const auto& v = m.vertices();
  ClosestPoint c = closest_point_on_triangle(q, v[static_cast<std::size_t>(f[0])], v[static_cast<std::size_t>(f[1])],
                                             v[static_cast<std::size_t>(f[2])]);
  if (c.sq_dist < best.sq_dist || (c.sq_dist == best.sq_dist && t < best.triangle)) {
    c.triangle = t;
    best = c;
  }
}

double sign_of(const TriMesh& m, const Vec3& q, const ClosestPoint& c) {
  if (c.sq_dist == 0.0) return 0.0;
  const auto t = static_cast<std::size_t>(c.triangle);
  Vec3 n;
  switch (c.feature) {
    case Feature::Face: n = m.face_normal(t); break;
    case Feature::Edge: n = m.edge_normal(t, c.index); break;
    case Feature::Vertex:
      n = m.vertex_normal(static_cast<std::size_t>(m.triangles()[t][static_cast<std::size_t>(c.index)]));
      break;
  }
  const double s = (q - c.point).dot(n) < 0.0 ? -1.0 : 1.0;
  return s * std::sqrt(c.sq_dist);
}

}  // namespace

ClosestPoint closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  ClosestPoint r;
  auto finish = [&](const Vec3& x, Feature f, int idx) {
    r.point = x;
    r.feature = f;
    r.index = idx;
    r.sq_dist = (p - x).squaredNorm();
    return r;
  };
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return finish(a, Feature::Vertex, 0);
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return finish(b, Feature::Vertex, 1);
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return finish(a + (d1 / (d1 - d3)) * ab, Feature::Edge, 0);
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return finish(c, Feature::Vertex, 2);
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return finish(a + (d2 / (d2 - d6)) * ac, Feature::Edge, 2);
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0)
    return finish(b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b), Feature::Edge, 1);
  const double sum = va + vb + vc;
  if (!(sum > 0.0)) {
    // Degenerate triangle: nearest of its three edges.
    ClosestPoint e0 = on_segment(p, a, b, 0, 0, 1), e1 = on_segment(p, b, c, 1, 1, 2), e2 = on_segment(p, c, a, 2, 2, 0);
    ClosestPoint best = e0;
    if (e1.sq_dist < best.sq_dist) best = e1;
    if (e2.sq_dist < best.sq_dist) best = e2;
    return best;
  }
  const double v = vb / sum, w = vc / sum;
  return finish(a + v * ab + w * ac, Feature::Face, 0);
}

ClosestPoint closest_point(const TriMesh& m, const Vec3& q) {
  ClosestPoint best;
  const auto& nodes = m.bvh();
  const auto& order = m.bvh_order();
  int stack[128];
  int sp = 0;
  stack[sp++] = 0;
  while (sp > 0) {
    const auto& n = nodes[static_cast<std::size_t>(stack[--sp])];
    if (n.box.sq_dist(q) > best.sq_dist) continue;
    if (n.left < 0) {
      for (int i = n.start; i < n.start + n.count; ++i) consider(m, q, order[static_cast<std::size_t>(i)], best);
      continue;
    }
    const double dl = nodes[static_cast<std::size_t>(n.left)].box.sq_dist(q);
    const double dr = nodes[static_cast<std::size_t>(n.right)].box.sq_dist(q);
    // Push the farther child first so the nearer one is searched first.
    if (dl <= dr) {
      stack[sp++] = n.right;
      stack[sp++] = n.left;
    } else {
      stack[sp++] = n.left;
      stack[sp++] = n.right;
    }
  }
  return best;
}

ClosestPoint closest_point_brute_force(const TriMesh& m, const Vec3& q) {
  ClosestPoint best;
  for (int t = 0; t < static_cast<int>(m.triangle_count()); ++t) consider(m, q, t, best);
  return best;
}

double signed_distance(const TriMesh& m, const Vec3& q) { return sign_of(m, q, closest_point(m, q)); }

double signed_distance_brute_force(const TriMesh& m, const Vec3& q) {
  return sign_of(m, q, closest_point_brute_force(m, q));
}

std::vector<double> signed_distances(const TriMesh& m, const Matrix& Q, int jobs) {
  std::vector<double> d(static_cast<std::size_t>(Q.rows()));
  parallel_for(Q.rows(), jobs, [&](Index b, Index e) {
    for (Index i = b; i < e; ++i) d[static_cast<std::size_t>(i)] = signed_distance(m, Q.row(i).transpose());
  });
  return d;
}

}  // namespace nrf::sdf
