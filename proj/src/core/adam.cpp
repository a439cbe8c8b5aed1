#include "nrf/adam.hpp"

#include <cmath>

#include "nrf/error.hpp"

namespace nrf::ad {

void adam_step(AdamState& s, std::span<Parameter* const> params) {
  if (s.m.empty() && s.v.empty()) {
    for (const Parameter* p : params) {
      s.m.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      s.v.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (s.m.size() != params.size() || s.v.size() != params.size())
    throw ShapeError("adam: state holds " + std::to_string(s.m.size()) + " moments for " +
                     std::to_string(params.size()) + " parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& p = *params[i];
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols() || s.m[i].rows() != p.value.rows() ||
        s.m[i].cols() != p.value.cols())
      throw ShapeError("adam: shape mismatch for parameter '" + p.name + "' value " + shape_str(p.value) + " grad " +
                       shape_str(p.grad) + " moment " + shape_str(s.m[i]));
  }

  s.t += 1;
  const double b1 = s.opt.beta1, b2 = s.opt.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(s.t));
  const double step = s.opt.lr / c1;
  const double inv_sqrt_c2 = 1.0 / std::sqrt(c2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    if (!p.trainable) continue;
    auto g = p.grad.array();
    auto m = s.m[i].array();
    auto v = s.v[i].array();
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.square();
    // w -= lr * mhat / (sqrt(vhat) + eps)
    p.value.array() -= step * m / (v.sqrt() * inv_sqrt_c2 + s.opt.eps);
  }
}

}  // namespace nrf::ad
