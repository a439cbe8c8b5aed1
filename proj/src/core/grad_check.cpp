#include "nrf/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "nrf/error.hpp"

namespace nrf::ad {
namespace {

double eval_objective(const Objective& f) {
  Tape tape;
  Var out = f(tape);
  const Matrix& v = tape.value(out);
  if (v.size() != 1) throw UsageError("grad_check objective must be scalar, got " + shape_str(v));
  return v(0, 0);
}

}  // namespace

GradCheckReport grad_check(std::span<Parameter* const> params, const Objective& f, const GradCheckOptions& opt) {
  if (!(opt.h > 0.0)) throw UsageError("grad_check: h must be positive");
  std::vector<Parameter*> train;
  for (Parameter* p : params)
    if (p->trainable && p->value.size() > 0) train.push_back(p);
  GradCheckReport rep;
  if (train.empty()) return rep;

  for (Parameter* p : train) p->zero_grad();
  {
    Tape tape;
    Var out = f(tape);
    tape.backward(out);
  }
  std::vector<Matrix> analytic;
  analytic.reserve(train.size());
  for (Parameter* p : train) analytic.push_back(p->grad);

  std::mt19937_64 rng(opt.seed);
  for (std::size_t c = 0; c < opt.coordinates; ++c) {
    std::uniform_int_distribution<std::size_t> pick_param(0, train.size() - 1);
    const std::size_t pi = pick_param(rng);
    Parameter& p = *train[pi];
    std::uniform_int_distribution<Index> pick_entry(0, p.value.size() - 1);
    const Index e = pick_entry(rng);
    const Index r = e / p.value.cols(), col = e % p.value.cols();

    const double w0 = p.value(r, col);
    p.value(r, col) = w0 + opt.h;
    const double fp = eval_objective(f);
    p.value(r, col) = w0 - opt.h;
    const double fm = eval_objective(f);
    p.value(r, col) = w0;

    GradCheckEntry ent;
    ent.param = p.name;
    ent.row = r;
    ent.col = col;
    ent.analytic = analytic[pi](r, col);
    ent.numeric = (fp - fm) / (2.0 * opt.h);
    const double denom = std::max({std::fabs(ent.analytic), std::fabs(ent.numeric), opt.denom_floor});
    ent.rel_error = std::fabs(ent.analytic - ent.numeric) / denom;
    rep.max_rel_error = std::max(rep.max_rel_error, ent.rel_error);
    if (!(ent.rel_error < opt.tol)) rep.failures.push_back(ent);
    rep.checked.push_back(ent);
  }
  for (Parameter* p : train) p->zero_grad();
  return rep;
}

}  // namespace nrf::ad
