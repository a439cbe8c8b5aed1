#include "nrf/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "nrf/error.hpp"
#include "nrf/parallel.hpp"

namespace nrf::metrics {
namespace {

void check_same_shape(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError("prediction " + shape_str(a) + " and truth " + shape_str(b) + " differ in shape");
  if (a.rows() == 0) throw DataError("metrics need at least one sample");
}

}  // namespace

RowVector rmse(const Matrix& pred, const Matrix& truth) {
  check_same_shape(pred, truth);
  RowVector out(pred.cols());
  for (Index c = 0; c < pred.cols(); ++c)
    out(c) = std::sqrt((pred.col(c) - truth.col(c)).squaredNorm() / static_cast<double>(pred.rows()));
  return out;
}

double norm_rmse(const Matrix& pred, const Matrix& truth, const std::vector<int>& cols) {
  check_same_shape(pred, truth);
  if (cols.empty()) throw ConfigError("eval.norm_components", "needs at least one component");
  double acc = 0.0;
  for (Index r = 0; r < pred.rows(); ++r) {
    double a = 0.0, b = 0.0;
    for (int c : cols) {
      if (c < 0 || c >= pred.cols()) throw ConfigError("eval.norm_components", "component out of range");
      a += pred(r, c) * pred(r, c);
      b += truth(r, c) * truth(r, c);
    }
    const double d = std::sqrt(a) - std::sqrt(b);
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(pred.rows()));
}

SnrPsnr snr_psnr(const Matrix& pred, const Matrix& truth) {
  check_same_shape(pred, truth);
  const double n = static_cast<double>(truth.size());
  const double power = truth.squaredNorm() / n;
  const double peak = truth.cwiseAbs().maxCoeff();
  if (!(peak > 0.0)) throw DataError("SNR needs a truth signal that is nonzero somewhere");
  const double mse = (pred - truth).squaredNorm() / n;
  if (mse == 0.0) return {kInfiniteDb, kInfiniteDb};
  return {10.0 * std::log10(power / mse), 10.0 * std::log10(peak * peak / mse)};
}

Compression compression_report(const model::Model& m, std::uint64_t nodes, std::uint64_t components,
                               std::uint64_t steps) {
  Compression c;
  c.raw_bytes = raw_field_bytes(nodes, components, steps);
  const auto sz = model::checkpoint_size(m);
  c.checkpoint_bytes = sz.file_bytes;
  c.eq32_bytes = sz.eq32_bytes;
  c.parameter_count = m.parameter_count();
  c.ratio = static_cast<double>(c.raw_bytes) / static_cast<double>(c.eq32_bytes);
  return c;
}

Histogram histogram(const std::vector<double>& v, int bins) {
  if (bins < 1) throw ConfigError("eval.bins", "must be at least 1");
  if (v.empty()) throw DataError("histogram of an empty set");
  Histogram h;
  const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  const double lo = *lo_it, hi = *hi_it;
  for (int b = 0; b <= bins; ++b) h.edges.push_back(lo + (hi - lo) * b / bins);
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  for (double x : v) {
    const int b = hi > lo ? static_cast<int>((x - lo) / (hi - lo) * bins) : 0;
    ++h.counts[static_cast<std::size_t>(std::clamp(b, 0, bins - 1))];
  }
  return h;
}

GridValidation grid_validation(const model::Model& m, const data::TetMesh& mesh, const GridOptions& opt, int jobs) {
  if (opt.n < 2) throw ConfigError("eval.grid", "grid size must be at least 2");
  const int T = mesh.timesteps(), C = mesh.components();
  const bool timed = T > 1;
  if (m.config().in_dim != (timed ? 4 : 3) || m.config().out_dim != C)
    throw ShapeError("model maps " + std::to_string(m.config().in_dim) + " -> " + std::to_string(m.config().out_dim) +
                     " but the mesh needs " + std::to_string(timed ? 4 : 3) + " -> " + std::to_string(C));
  std::vector<int> steps = opt.steps;
  if (steps.empty())
    for (int k = 0; k < T; ++k) steps.push_back(k);
  for (int k : steps)
    if (k < 0 || k >= T) throw ConfigError("eval.steps", "time step " + std::to_string(k) + " is out of range");

  data::TetLocator loc(mesh);
  const Vec3 lo = mesh.nodes.colwise().minCoeff().transpose(), hi = mesh.nodes.colwise().maxCoeff().transpose();
  const int n = opt.n;
  const Index total = static_cast<Index>(n) * n * n;
  auto coord = [&](int i, int d) {
    const double f = opt.node_coincident ? static_cast<double>(i) / (n - 1) : (i + 0.5) / n;
    return lo(d) + f * (hi(d) - lo(d));
  };
  std::vector<std::optional<data::TetHit>> hits(static_cast<std::size_t>(total));
  std::vector<Vec3> pts(static_cast<std::size_t>(total));
  parallel_for(total, jobs, [&](Index b, Index e) {
    for (Index g = b; g < e; ++g) {
      const int i = static_cast<int>(g % n), j = static_cast<int>((g / n) % n), k = static_cast<int>(g / (n * n));
      const Vec3 q(coord(i, 0), coord(j, 1), coord(k, 2));
      pts[static_cast<std::size_t>(g)] = q;
      hits[static_cast<std::size_t>(g)] = loc.locate(q);
    }
  });
  std::vector<Index> inside;
  for (Index g = 0; g < total; ++g)
    if (hits[static_cast<std::size_t>(g)]) inside.push_back(g);
  if (inside.empty()) throw DataError("no validation grid point lies inside the mesh");

  const Index ni = static_cast<Index>(inside.size());
  GridValidation out;
  out.points_total = total * static_cast<Index>(steps.size());
  out.points_inside = ni * static_cast<Index>(steps.size());
  out.points.resize(out.points_inside, timed ? 4 : 3);
  Matrix truth(out.points_inside, C);
  for (std::size_t s = 0; s < steps.size(); ++s) {
    const Matrix& nodal = mesh.values[static_cast<std::size_t>(steps[s])];
    for (Index r = 0; r < ni; ++r) {
      const auto g = static_cast<std::size_t>(inside[static_cast<std::size_t>(r)]);
      const Index row = static_cast<Index>(s) * ni + r;
      out.points.block(row, 0, 1, 3) = pts[g].transpose();
      if (timed) out.points(row, 3) = static_cast<double>(steps[s]);
      const auto& h = *hits[g];
      const auto& tet = mesh.tets[static_cast<std::size_t>(h.tet)];
      RowVector v = RowVector::Zero(C);
      for (int c = 0; c < 4; ++c) v += h.lambda[static_cast<std::size_t>(c)] * nodal.row(tet[static_cast<std::size_t>(c)]);
      truth.row(row) = v;
    }
  }
  Matrix pred(out.points_inside, C);
  parallel_for(out.points_inside, jobs, [&](Index b, Index e) { pred.middleRows(b, e - b) = m.predict(out.points.middleRows(b, e - b)); });
  out.error = pred - truth;
  out.rmse = rmse(pred, truth);
  return out;
}

Matrix sample_polyline(const Matrix& v, int samples) {
  if (v.rows() < 2) throw DataError("a polyline needs at least two vertices");
  if (samples < 2) throw ConfigError("eval.profile_samples", "must be at least 2");
  std::vector<double> cum(static_cast<std::size_t>(v.rows()), 0.0);
  for (Index i = 1; i < v.rows(); ++i)
    cum[static_cast<std::size_t>(i)] = cum[static_cast<std::size_t>(i - 1)] + (v.row(i) - v.row(i - 1)).norm();
  const double L = cum.back();
  if (!(L > 0.0)) throw DataError("polyline has zero length");
  Matrix out(samples, v.cols() + 1);
  std::size_t seg = 1;
  for (int s = 0; s < samples; ++s) {
    const double a = L * s / (samples - 1);
    while (seg + 1 < cum.size() && cum[seg] < a) ++seg;
    const double len = cum[seg] - cum[seg - 1];
    const double f = len > 0.0 ? std::clamp((a - cum[seg - 1]) / len, 0.0, 1.0) : 0.0;
    out(s, 0) = a;
    out.block(s, 1, 1, v.cols()) = (1.0 - f) * v.row(static_cast<Index>(seg - 1)) + f * v.row(static_cast<Index>(seg));
  }
  return out;
}

std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  const bool integral = v == std::floor(v) && std::fabs(v) < 1e17;
  auto [p, ec] = integral ? std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed)
                          : std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

void EvalReport::add(std::string key, double value) { kv_.emplace_back(std::move(key), format_number(value)); }
void EvalReport::add(std::string key, std::string value) { kv_.emplace_back(std::move(key), std::move(value)); }

std::optional<std::string> EvalReport::get(const std::string& key) const {
  for (const auto& [k, v] : kv_)
    if (k == key) return v;
  return std::nullopt;
}

std::string EvalReport::to_text() const {
  std::string s;
  for (const auto& [k, v] : kv_) s += k + " = " + v + "\n";
  return s;
}

std::string EvalReport::to_tsv() const {
  std::string s = "key\tvalue\n";
  for (const auto& [k, v] : kv_) s += k + "\t" + v + "\n";
  return s;
}

}  // namespace nrf::metrics
