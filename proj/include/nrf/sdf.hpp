#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "nrf/point_field.hpp"
#include "nrf/rng.hpp"
#include "nrf/tensor.hpp"

namespace nrf::sdf {

struct Aabb {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void grow(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  double sq_dist(const Vec3& q) const { return (lo - q).cwiseMax(q - hi).cwiseMax(0.0).squaredNorm(); }
};

// Triangle mesh with the derived data needed for exact signed distances.
class TriMesh {
 public:
  TriMesh() = default;
  // Vertices are used as given (no welding). Throws DataError when empty, an
  // index is out of range, or the total area is zero.
  TriMesh(std::vector<Vec3> vertices, std::vector<std::array<int, 3>> triangles);

  const std::vector<Vec3>& vertices() const { return v_; }
  const std::vector<std::array<int, 3>>& triangles() const { return f_; }
  std::size_t vertex_count() const { return v_.size(); }
  std::size_t triangle_count() const { return f_.size(); }

  const Vec3& face_normal(std::size_t t) const { return fn_[t]; }
  double area(std::size_t t) const { return area_[t]; }
  double total_area() const { return cum_area_.back(); }
  const std::vector<double>& cumulative_area() const { return cum_area_; }
  const Vec3& vertex_normal(std::size_t v) const { return vn_[v]; }
  // Pseudo-normal of edge (f[t][e], f[t][(e+1)%3]).
  const Vec3& edge_normal(std::size_t t, int e) const { return en_[t][static_cast<std::size_t>(e)]; }
  bool watertight() const { return watertight_; }
  Aabb bounds() const { return bounds_; }

  struct BvhNode {
    Aabb box;
    int left = -1, right = -1;  // children, or -1 for a leaf
    int start = 0, count = 0;   // range in bvh_order() for leaves
  };
  const std::vector<BvhNode>& bvh() const { return nodes_; }
  const std::vector<int>& bvh_order() const { return order_; }

 private:
  void build_bvh();

  std::vector<Vec3> v_;
  std::vector<std::array<int, 3>> f_;
  std::vector<Vec3> fn_, vn_;
  std::vector<std::array<Vec3, 3>> en_;
  std::vector<double> area_, cum_area_;
  bool watertight_ = false;
  Aabb bounds_;
  std::vector<BvhNode> nodes_;
  std::vector<int> order_;
};

// Loaders weld vertices with bit-identical coordinates.
TriMesh parse_obj(std::string_view text, const std::string& source = "<memory>");
TriMesh parse_stl(std::string_view bytes, const std::string& source = "<memory>");  // ASCII or binary
TriMesh load_trimesh(const std::filesystem::path& path);                           // by extension
std::string encode_obj(const TriMesh& mesh);
void save_obj(const std::filesystem::path& path, const TriMesh& mesh);

// Closed icosahedral sphere: 20 * 4^subdivisions triangles, vertices on the
// sphere.
TriMesh make_icosphere(double radius, int subdivisions, const Vec3& center = Vec3::Zero());

// x_unit = scale * (x - center) + 0.5
struct UnitCubeTransform {
  double scale = 1.0;
  Vec3 center = Vec3::Constant(0.5);

  Vec3 apply(const Vec3& x) const { return scale * (x - center) + Vec3::Constant(0.5); }
  Vec3 inverse(const Vec3& u) const { return (u - Vec3::Constant(0.5)) / scale + center; }
  double to_physical_length(double d) const { return d / scale; }
};

// Longest bounding-box side maps to [0,1], the others are centered.
// Throws DataError for a zero-extent box.
std::pair<TriMesh, UnitCubeTransform> rescale_to_unit_cube(const TriMesh& mesh);

enum class Feature { Face, Edge, Vertex };

struct ClosestPoint {
  double sq_dist = std::numeric_limits<double>::infinity();
  Vec3 point = Vec3::Zero();
  int triangle = -1;
  Feature feature = Feature::Face;
  int index = 0;  // local edge (0..2) or vertex (0..2)
};

ClosestPoint closest_point_on_triangle(const Vec3& q, const Vec3& a, const Vec3& b, const Vec3& c);

// Closest point over the whole mesh; on exact ties the lowest triangle index
// wins.
ClosestPoint closest_point(const TriMesh& mesh, const Vec3& q);
ClosestPoint closest_point_brute_force(const TriMesh& mesh, const Vec3& q);

// Negative inside. The sign comes from the pseudo-normal of the closest
// feature.
double signed_distance(const TriMesh& mesh, const Vec3& q);
double signed_distance_brute_force(const TriMesh& mesh, const Vec3& q);
std::vector<double> signed_distances(const TriMesh& mesh, const Matrix& Q, int jobs = 0);

// ---- training set generation ----

enum class Scenario { MSS, SMS, SSM };
enum class SampleSize { Large, Small };
enum class SampleClass : std::uint8_t { Uniform = 0, Surface = 1, Perturbed = 2 };

std::string_view to_string(Scenario s);
std::string_view to_string(SampleSize s);
Scenario parse_scenario(std::string_view s);     // throws ConfigError
SampleSize parse_sample_size(std::string_view s);

struct SampleCounts {
  Index uniform = 0, surface = 0, perturbed = 0;
  Index total() const { return uniform + surface + perturbed; }
};
SampleCounts scenario_counts(Scenario s, SampleSize size);

struct SdfSampleSet {
  Matrix points;  // N x 3, uniform class first, then surface, then perturbed
  std::vector<double> distance;
  std::vector<SampleClass> cls;
  SampleCounts counts;
  std::string scenario;
  double delta = 1024.0;
  std::uint64_t seed = 0;

  Index size() const { return points.rows(); }
  // Columns x y z d class.
  data::PointTable to_table() const;
};

inline double perturbation_sigma(double delta) { return 0.5 / delta; }

SdfSampleSet sample_sdf_training_set(const TriMesh& mesh, const SampleCounts& counts, double delta,
                                     std::uint64_t seed, int jobs = 0);
SdfSampleSet sample_sdf_training_set(const TriMesh& mesh, Scenario s, SampleSize size, double delta,
                                     std::uint64_t seed, int jobs = 0);

// Point on the surface drawn with probability proportional to triangle area;
// returns the triangle and writes the barycentric weights.
int sample_surface_point(const TriMesh& mesh, Rng& rng, Vec3& point, Vec3& bary);

// ---- reconstruction ----

// Evaluates physical points (rows) of the unit cube.
using SdfFunction = std::function<Matrix(const Matrix&)>;

struct CrossingSet {
  Matrix points;                  // K x 3, ordered by lower lattice endpoint, then axis
  std::vector<double> distance;   // exact signed distance to the reference mesh, when given
};

// Lattice nodes i/(n-1) on [0,1]^3, streamed one z-plane at a time. Every
// lattice edge with a strict sign change yields its linear zero crossing.
CrossingSet extract_zero_crossings(const SdfFunction& f, int grid_n, const TriMesh* mesh = nullptr, int jobs = 0);

struct Histogram {
  std::vector<double> edges;  // bins + 1
  std::vector<std::size_t> counts;
};

struct DistanceStats {
  std::size_t count = 0;
  double mean_abs = 0.0, max_abs = 0.0;
  double mean_abs_physical = 0.0, max_abs_physical = 0.0;
  Histogram histogram;  // over |d| in unit-cube units
};

// Throws DataError on empty input.
DistanceStats distance_error_stats(const std::vector<double>& distances, const UnitCubeTransform& tf = {},
                                   int bins = 20);

}  // namespace nrf::sdf
