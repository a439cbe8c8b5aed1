#include <algorithm>
#include <cmath>

#include "nrf/encoding.hpp"
#include "nrf/error.hpp"

namespace nrf::enc {
namespace {

constexpr std::uint32_t kPrimes[4] = {1u, 2654435761u, 805459861u, 3674653429u};

}  // namespace

std::uint32_t mhe_hash(std::span<const std::int64_t> corner, int log2_table_size) {
  std::uint32_t h = 0;
  for (std::size_t i = 0; i < corner.size() && i < 4; ++i)
    h ^= static_cast<std::uint32_t>(corner[i]) * kPrimes[i];
  const std::uint32_t mask = log2_table_size >= 32 ? 0xffffffffu : ((1u << log2_table_size) - 1u);
  return h & mask;
}

std::vector<int> mhe_level_resolutions(int rmin, int rmax, int levels) {
  if (levels < 1) throw ConfigError("encoding.hash.levels", "must be at least 1");
  if (rmax < rmin) throw ConfigError("encoding.hash.max_resolution", "must be at least min_resolution");
  if (levels == 1) return {rmin};
  const double b = std::exp((std::log(static_cast<double>(rmax)) - std::log(static_cast<double>(rmin))) /
                            static_cast<double>(levels - 1));
  std::vector<int> r(static_cast<std::size_t>(levels));
  for (int l = 0; l < levels; ++l) {
    const double v = std::floor(static_cast<double>(rmin) * std::pow(b, l));
    r[static_cast<std::size_t>(l)] = std::clamp(static_cast<int>(v), rmin, rmax);
  }
  r.front() = rmin;
  r.back() = rmax;
  return r;
}

bool mhe_level_is_dense(int resolution, int dims, int log2_table_size) {
  double cells = std::pow(static_cast<double>(resolution) + 1.0, dims);
  return cells <= std::ldexp(1.0, log2_table_size);
}

HashLookup mhe_lookup(const Matrix& x01, int R, int log2T, std::size_t* clamped) {
  const Index B = x01.rows();
  const int d = static_cast<int>(x01.cols());
  if (d < 1 || d > 4) throw ShapeError("hash lookup supports 1 to 4 spatial inputs, got " + std::to_string(d));
  const int K = 1 << d;
  const bool dense = mhe_level_is_dense(R, d, log2T);
  HashLookup out;
  out.index.resize(static_cast<std::size_t>(B * K));
  out.weights.resize(B, K);
  std::size_t nclamp = 0;
  std::int64_t i0[4];
  double f[4];
  std::int64_t corner[4];
  for (Index b = 0; b < B; ++b) {
    bool was_clamped = false;
    for (int k = 0; k < d; ++k) {
      double u = x01(b, k);
      if (u < 0.0 || u > 1.0) {
        was_clamped = true;
        u = std::clamp(u, 0.0, 1.0);
      }
      const double pos = u * R;
      std::int64_t c = static_cast<std::int64_t>(std::floor(pos));
      c = std::clamp<std::int64_t>(c, 0, R - 1);
      i0[k] = c;
      f[k] = pos - static_cast<double>(c);
    }
    if (was_clamped) ++nclamp;
    for (int c = 0; c < K; ++c) {
      double w = 1.0;
      for (int k = 0; k < d; ++k) {
        const bool hi = (c >> k) & 1;
        corner[k] = i0[k] + (hi ? 1 : 0);
        w *= hi ? f[k] : 1.0 - f[k];
      }
      std::int64_t idx;
      if (dense) {
        idx = 0;
        std::int64_t stride = 1;
        for (int k = 0; k < d; ++k) {
          idx += corner[k] * stride;
          stride *= R + 1;
        }
      } else {
        idx = mhe_hash(std::span<const std::int64_t>(corner, static_cast<std::size_t>(d)), log2T);
      }
      out.index[static_cast<std::size_t>(b * K + c)] = idx;
      out.weights(b, c) = w;
    }
  }
  if (clamped) *clamped += nclamp;
  return out;
}

Matrix mhe_encode(const Matrix& x01, std::span<const Matrix> tables, const HashGridSpec& spec, const Matrix& aux) {
  if (static_cast<int>(tables.size()) != spec.levels)
    throw ShapeError("mhe_encode: " + std::to_string(tables.size()) + " tables for " + std::to_string(spec.levels) +
                     " levels");
  if (aux.cols() != spec.aux_count || (aux.cols() > 0 && aux.rows() != x01.rows()))
    throw ShapeError("mhe_encode: aux block " + shape_str(aux) + " does not match aux_count " +
                     std::to_string(spec.aux_count));
  const auto res = mhe_level_resolutions(spec.min_resolution, spec.max_resolution, spec.levels);
  const Index B = x01.rows(), D = spec.features;
  Matrix out = Matrix::Zero(B, spec.levels * D + spec.aux_count);
  for (int l = 0; l < spec.levels; ++l) {
    const Matrix& T = tables[static_cast<std::size_t>(l)];
    if (T.rows() != (Index{1} << spec.log2_table_size) || T.cols() != D)
      throw ShapeError("mhe_encode: table " + std::to_string(l) + " has shape " + shape_str(T));
    HashLookup lk = mhe_lookup(x01, res[static_cast<std::size_t>(l)], spec.log2_table_size);
    const Index K = lk.weights.cols();
    for (Index b = 0; b < B; ++b)
      for (Index k = 0; k < K; ++k)
        out.block(b, l * D, 1, D) += lk.weights(b, k) * T.row(lk.index[static_cast<std::size_t>(b * K + k)]);
  }
  if (spec.aux_count > 0) out.rightCols(spec.aux_count) = aux;
  return out;
}

}  // namespace nrf::enc
