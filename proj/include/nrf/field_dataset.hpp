#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "nrf/tensor.hpp"

namespace nrf::data {

struct TetMesh;

// Affine input map to [-1, 1] per dimension and z-score output map per
// component.
struct IoNormalization {
  RowVector in_lo, in_hi;
  RowVector out_shift, out_scale;

  static IoNormalization identity(int in_dim, int out_dim);
  int in_dim() const { return static_cast<int>(in_lo.size()); }
  int out_dim() const { return static_cast<int>(out_shift.size()); }
  Matrix normalize_inputs(const Matrix& X) const;
  Matrix normalize_outputs(const Matrix& Y) const;
  Matrix denormalize_outputs(const Matrix& Yn) const;
};

struct FieldDataset {
  Matrix coords;  // N x Din, time last when present
  Matrix values;  // N x C
  std::vector<std::string> coord_names, value_names;
  RowVector lo, hi;
  int time_column = -1;
  std::shared_ptr<const TetMesh> mesh;

  Index size() const { return coords.rows(); }
  int in_dim() const { return static_cast<int>(coords.cols()); }
  int out_dim() const { return static_cast<int>(values.cols()); }
  // Index of the named value component, or -1.
  int value_index(std::string_view name) const;
  void compute_box();
  // Throws DataError when empty, non-finite, or outside its box.
  void validate() const;
};

struct NormalizedData {
  Matrix X, Y;
  IoNormalization norm;
};

// Zero-variance components keep scale 1 and log a warning.
NormalizedData normalize_io(const FieldDataset& ds);

}  // namespace nrf::data
