#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nrf/tape.hpp"

namespace nrf::ad {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamOptions opt;
  std::vector<Matrix> m, v;
  std::int64_t t = 0;
};

// Bias-corrected Adam update of every parameter from its .grad, in place.
// The moment buffers are created on the first call.
void adam_step(AdamState& state, std::span<Parameter* const> params);

}  // namespace nrf::ad
