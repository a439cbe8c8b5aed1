#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nrf/model.hpp"
#include "nrf/tet_mesh.hpp"

namespace nrf::metrics {

// Per-column root mean square error. Throws ShapeError on mismatch.
RowVector rmse(const Matrix& pred, const Matrix& truth);

// RMSE of the row-wise Euclidean norm over the given columns.
double norm_rmse(const Matrix& pred, const Matrix& truth, const std::vector<int>& columns);

inline constexpr double kInfiniteDb = std::numeric_limits<double>::infinity();

struct SnrPsnr {
  double snr_db = 0.0;   // 10 log10(mean(truth^2) / mse)
  double psnr_db = 0.0;  // 10 log10(max|truth|^2 / mse)
};
// Over all entries; +inf when mse = 0. Throws DataError when truth is all zero.
SnrPsnr snr_psnr(const Matrix& pred, const Matrix& truth);

struct Compression {
  std::uint64_t raw_bytes = 0;  // Nn * C * 4 * T
  std::size_t checkpoint_bytes = 0;
  std::size_t eq32_bytes = 0;
  std::size_t parameter_count = 0;
  double ratio = 0.0;  // raw / eq32
};
inline std::uint64_t raw_field_bytes(std::uint64_t nodes, std::uint64_t components, std::uint64_t steps) {
  return nodes * components * 4 * steps;
}
Compression compression_report(const model::Model& m, std::uint64_t nodes, std::uint64_t components,
                               std::uint64_t steps);

struct Histogram {
  std::vector<double> edges;
  std::vector<std::size_t> counts;
};
// Equal-width bins over [min, max] of the values.
Histogram histogram(const std::vector<double>& values, int bins);

struct GridOptions {
  int n = 20;                 // points per axis
  bool node_coincident = false;  // lattice i/(n-1) over the box instead of cell centers (i+0.5)/n
  std::vector<int> steps;     // time steps to evaluate; empty means all
};

struct GridValidation {
  Index points_total = 0;
  Index points_inside = 0;
  RowVector rmse;
  Matrix points;  // inside points, with the time column when the mesh is time-dependent
  Matrix error;   // prediction - interpolated truth
};

// Evaluates the model on a regular grid over the mesh bounding box and
// compares with barycentric interpolation of the nodal truth. Throws
// DataError when no grid point lies inside the mesh.
GridValidation grid_validation(const model::Model& m, const data::TetMesh& mesh, const GridOptions& opt,
                               int jobs = 0);

// Points spaced evenly in arc length along a polyline (rows are vertices);
// column 0 of the result is the arc length, then the coordinates.
Matrix sample_polyline(const Matrix& vertices, int samples);

// Flat, ordered key/value report.
class EvalReport {
 public:
  void add(std::string key, double value);
  void add(std::string key, std::string value);
  const std::vector<std::pair<std::string, std::string>>& entries() const { return kv_; }
  std::optional<std::string> get(const std::string& key) const;

  std::string to_text() const;  // "key = value" lines
  std::string to_tsv() const;   // "key\tvalue" lines with a header

 private:
  std::vector<std::pair<std::string, std::string>> kv_;
};

// Shortest round-trip decimal form, integers without an exponent; "inf" for
// +infinity.
std::string format_number(double v);

}  // namespace nrf::metrics
