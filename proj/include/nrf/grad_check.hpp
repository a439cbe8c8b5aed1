#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "nrf/tape.hpp"

namespace nrf::ad {

struct GradCheckOptions {
  double h = 1e-6;
  double tol = 1e-5;
  std::size_t coordinates = 50;
  std::uint64_t seed = 1;
  // Lower bound on the relative-error denominator. Central differences carry
  // an absolute error of roughly eps*|f|/h, so gradients far below that
  // level cannot be compared relatively.
  double denom_floor = 1e-4;
};

struct GradCheckEntry {
  std::string param;
  Index row = 0, col = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::vector<GradCheckEntry> checked;
  std::vector<GradCheckEntry> failures;
  bool passed() const { return failures.empty(); }
};

// Records a scalar objective on the given tape.
using Objective = std::function<Var(Tape&)>;

// Compares backward() against central differences on randomly chosen entries
// of the trainable parameters. Each coordinate is drawn by first picking a
// parameter tensor uniformly, then an entry within it.
GradCheckReport grad_check(std::span<Parameter* const> params, const Objective& f, const GradCheckOptions& opt = {});

}  // namespace nrf::ad
