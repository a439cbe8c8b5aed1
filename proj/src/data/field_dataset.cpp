#include "nrf/field_dataset.hpp"

#include <spdlog/spdlog.h>

#include <cmath>

#include "nrf/error.hpp"

namespace nrf::data {

IoNormalization IoNormalization::identity(int in_dim, int out_dim) {
  IoNormalization n;
  n.in_lo = RowVector::Constant(in_dim, -1.0);
  n.in_hi = RowVector::Constant(in_dim, 1.0);
  n.out_shift = RowVector::Zero(out_dim);
  n.out_scale = RowVector::Ones(out_dim);
  return n;
}

Matrix IoNormalization::normalize_inputs(const Matrix& X) const {
  if (X.cols() != in_lo.size())
    throw ShapeError("expected " + std::to_string(in_lo.size()) + " input columns, got " + shape_str(X));
  Matrix out(X.rows(), X.cols());
  for (Index j = 0; j < X.cols(); ++j) {
    const double half = 0.5 * (in_hi(j) - in_lo(j));
    const double mid = 0.5 * (in_hi(j) + in_lo(j));
    const double inv = half > 0.0 ? 1.0 / half : 1.0;
    out.col(j) = (X.col(j).array() - mid) * inv;
  }
  return out;
}

Matrix IoNormalization::normalize_outputs(const Matrix& Y) const {
  if (Y.cols() != out_shift.size())
    throw ShapeError("expected " + std::to_string(out_shift.size()) + " output columns, got " + shape_str(Y));
  Matrix out = Y;
  out.rowwise() -= out_shift;
  out.array().rowwise() /= out_scale.array();
  return out;
}

Matrix IoNormalization::denormalize_outputs(const Matrix& Yn) const {
  if (Yn.cols() != out_shift.size())
    throw ShapeError("expected " + std::to_string(out_shift.size()) + " output columns, got " + shape_str(Yn));
  Matrix out = Yn.array().rowwise() * out_scale.array();
  out.rowwise() += out_shift;
  return out;
}

int FieldDataset::value_index(std::string_view name) const {
  for (std::size_t i = 0; i < value_names.size(); ++i)
    if (value_names[i] == name) return static_cast<int>(i);
  return -1;
}

void FieldDataset::compute_box() {
  if (coords.rows() == 0) throw DataError("dataset has no records");
  lo = coords.colwise().minCoeff();
  hi = coords.colwise().maxCoeff();
}

void FieldDataset::validate() const {
  if (coords.rows() == 0) throw DataError("dataset has no records");
  if (values.rows() != coords.rows())
    throw DataError("dataset has " + std::to_string(coords.rows()) + " coordinate rows but " +
                    std::to_string(values.rows()) + " value rows");
  if (!coords.allFinite() || !values.allFinite()) throw DataError("dataset contains non-finite entries");
  if (lo.size() != coords.cols() || hi.size() != coords.cols()) throw DataError("dataset box has wrong dimension");
  for (Index j = 0; j < coords.cols(); ++j)
    if (coords.col(j).minCoeff() < lo(j) || coords.col(j).maxCoeff() > hi(j))
      throw DataError("coordinate column " + std::to_string(j) + " leaves the dataset box");
}

NormalizedData normalize_io(const FieldDataset& ds) {
  ds.validate();
  NormalizedData out;
  out.norm.in_lo = ds.lo;
  out.norm.in_hi = ds.hi;
  const Index N = ds.size();
  const int C = ds.out_dim();
  out.norm.out_shift.resize(C);
  out.norm.out_scale.resize(C);
  for (int c = 0; c < C; ++c) {
    const double mean = ds.values.col(c).mean();
    const double var = (ds.values.col(c).array() - mean).square().sum() / static_cast<double>(N);
    out.norm.out_shift(c) = mean;
    if (var > 0.0 && std::isfinite(var)) {
      out.norm.out_scale(c) = std::sqrt(var);
    } else {
      out.norm.out_scale(c) = 1.0;
      spdlog::warn("output component '{}' has zero variance; using scale 1",
                   c < static_cast<int>(ds.value_names.size()) ? ds.value_names[static_cast<std::size_t>(c)]
                                                               : std::to_string(c));
    }
  }
  out.X = out.norm.normalize_inputs(ds.coords);
  out.Y = out.norm.normalize_outputs(ds.values);
  return out;
}

}  // namespace nrf::data
