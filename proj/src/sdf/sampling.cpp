#include <algorithm>
#include <cmath>

#include "nrf/error.hpp"
#include "nrf/sdf.hpp"

namespace nrf::sdf {

std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::MSS: return "MSS";
    case Scenario::SMS: return "SMS";
    case Scenario::SSM: return "SSM";
  }
  return "?";
}

std::string_view to_string(SampleSize s) { return s == SampleSize::Large ? "large" : "small"; }

Scenario parse_scenario(std::string_view s) {
  for (auto v : {Scenario::MSS, Scenario::SMS, Scenario::SSM})
    if (to_string(v) == s) return v;
  throw ConfigError("sdf.scenario", "unknown scenario '" + std::string(s) + "' (expected MSS, SMS or SSM)");
}

SampleSize parse_sample_size(std::string_view s) {
  if (s == "large") return SampleSize::Large;
  if (s == "small") return SampleSize::Small;
  throw ConfigError("sdf.size", "unknown sample size '" + std::string(s) + "' (expected large or small)");
}

SampleCounts scenario_counts(Scenario s, SampleSize size) {
  const Index many = size == SampleSize::Large ? 500000 : 100000;
  const Index few = size == SampleSize::Large ? 40000 : 8000;
  switch (s) {
    case Scenario::MSS: return {many, few, few};
    case Scenario::SMS: return {few, many, few};
    case Scenario::SSM: return {few, few, many};
  }
  return {};
}

data::PointTable SdfSampleSet::to_table() const {
  data::PointTable t;
  t.names = {"x", "y", "z", "d", "class"};
  t.data.resize(size(), 5);
  t.data.leftCols(3) = points;
  for (Index i = 0; i < size(); ++i) {
    t.data(i, 3) = distance[static_cast<std::size_t>(i)];
    t.data(i, 4) = static_cast<double>(cls[static_cast<std::size_t>(i)]);
  }
  return t;
}

int sample_surface_point(const TriMesh& m, Rng& rng, Vec3& point, Vec3& bary) {
  const auto& cum = m.cumulative_area();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double target = u(rng) * m.total_area();
  auto it = std::upper_bound(cum.begin(), cum.end(), target);
  if (it == cum.end()) --it;
  const int t = static_cast<int>(it - cum.begin());
  const double r1 = std::sqrt(u(rng)), r2 = u(rng);
  bary = Vec3(1.0 - r1, r1 * (1.0 - r2), r1 * r2);
  const auto& f = m.triangles()[static_cast<std::size_t>(t)];
  const auto& v = m.vertices();
  point = bary(0) * v[static_cast<std::size_t>(f[0])] + bary(1) * v[static_cast<std::size_t>(f[1])] +
          bary(2) * v[static_cast<std::size_t>(f[2])];
  return t;
}

SdfSampleSet sample_sdf_training_set(const TriMesh& m, const SampleCounts& counts, double delta, std::uint64_t seed,
                                     int jobs) {
  if (!(delta > 0.0)) throw ConfigError("sdf.delta", "must be positive");
  if (counts.uniform < 0 || counts.surface < 0 || counts.perturbed < 0 || counts.total() == 0)
    throw ConfigError("sdf.counts", "sample counts must be non-negative with a positive total");
  SdfSampleSet s;
  s.counts = counts;
  s.delta = delta;
  s.seed = seed;
  const Index n = counts.total();
  s.points.resize(n, 3);
  s.distance.assign(static_cast<std::size_t>(n), 0.0);
  s.cls.resize(static_cast<std::size_t>(n));

  Rng rng = make_rng(seed, "sdf-sample");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, perturbation_sigma(delta));
  Index row = 0;
  for (Index i = 0; i < counts.uniform; ++i, ++row) {
    for (int d = 0; d < 3; ++d) s.points(row, d) = u(rng);
    s.cls[static_cast<std::size_t>(row)] = SampleClass::Uniform;
  }
  Vec3 p, bary;
  for (Index i = 0; i < counts.surface; ++i, ++row) {
    sample_surface_point(m, rng, p, bary);
    s.points.row(row) = p.transpose();
    s.cls[static_cast<std::size_t>(row)] = SampleClass::Surface;
  }
  for (Index i = 0; i < counts.perturbed; ++i, ++row) {
    const int t = sample_surface_point(m, rng, p, bary);
    const auto& f = m.triangles()[static_cast<std::size_t>(t)];
    Vec3 n = Vec3::Zero();
    for (int k = 0; k < 3; ++k) n += bary(k) * m.vertex_normal(static_cast<std::size_t>(f[static_cast<std::size_t>(k)]));
    if (n.norm() > 0.0) n.normalize();
    else n = m.face_normal(static_cast<std::size_t>(t));
    s.points.row(row) = (p + g(rng) * n).transpose();
    s.cls[static_cast<std::size_t>(row)] = SampleClass::Perturbed;
  }

  Matrix uq = s.points.topRows(counts.uniform);
  auto du = signed_distances(m, uq, jobs);
  std::copy(du.begin(), du.end(), s.distance.begin());
  Matrix pq = s.points.bottomRows(counts.perturbed);
  auto dp = signed_distances(m, pq, jobs);
  std::copy(dp.begin(), dp.end(), s.distance.begin() + counts.uniform + counts.surface);
  return s;
}

SdfSampleSet sample_sdf_training_set(const TriMesh& m, Scenario sc, SampleSize size, double delta,
                                     std::uint64_t seed, int jobs) {
  SdfSampleSet s = sample_sdf_training_set(m, scenario_counts(sc, size), delta, seed, jobs);
  s.scenario = std::string(to_string(sc)) + "-" + std::string(to_string(size));
  return s;
}

}  // namespace nrf::sdf
