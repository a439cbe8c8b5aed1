#pragma once

#include <random>

#include "nrf/grad_check.hpp"
#include "nrf/model.hpp"
#include "nrf/tape.hpp"

namespace nrf::testing {

inline Matrix random_matrix(Index r, Index c, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

// f = sum(R .* model(X)) with a fixed random weighting R.
inline ad::Objective weighted_output(model::Model& m, const Matrix& X, const Matrix& R) {
  return [&m, X, R](ad::Tape& t) {
    Binder bind(t, m.params());
    ad::Var y = m.forward(bind, t.constant(X));
    return t.sum(t.hadamard(y, t.constant(R)));
  };
}

}  // namespace nrf::testing
