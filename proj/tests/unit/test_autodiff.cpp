#include <doctest.h>

#include <cmath>
#include <random>

#include "nrf/adam.hpp"
#include "nrf/error.hpp"
#include "nrf/grad_check.hpp"
#include "nrf/tape.hpp"
#include "nrf/vmath.hpp"
#include "test_util.hpp"

using namespace nrf;
using nrf::testing::random_matrix;

namespace {

Matrix m1(double v) { return Matrix::Constant(1, 1, v); }

// Central-difference gradient of a scalar function of one parameter tensor.
Matrix fd_grad(ad::Parameter& p, const std::function<double()>& f, double h = 1e-6) {
  Matrix g(p.value.rows(), p.value.cols());
  for (Index i = 0; i < p.value.size(); ++i) {
    const double w0 = p.value.data()[i];
    p.value.data()[i] = w0 + h;
    const double fp = f();
    p.value.data()[i] = w0 - h;
    const double fm = f();
    p.value.data()[i] = w0;
    g.data()[i] = (fp - fm) / (2 * h);
  }
  return g;
}

double rel_err(const Matrix& a, const Matrix& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1e-3, std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff()));
}

}  // namespace

TEST_CASE("forward examples") {
  ad::Tape t;
  CHECK(t.value(t.sin(t.input(m1(0.0))))(0, 0) == 0.0);
  Matrix W = m1(2.0), b = m1(1.0);
  CHECK(t.value(t.affine(t.input(m1(3.0)), t.constant(W), t.constant(b)))(0, 0) == 7.0);
  CHECK(t.value(t.silu(t.input(m1(0.0))))(0, 0) == 0.0);
}

TEST_CASE("backward examples") {
  ad::Parameter w("w", m1(3.0));
  {
    ad::Tape t;
    t.backward(t.sum(t.square(t.param(w))));
  }
  CHECK(w.grad(0, 0) == doctest::Approx(6.0).epsilon(1e-15));

  ad::Tape t;
  ad::Var x = t.input(m1(0.0), true);
  t.backward(t.sum(t.sin(x)));
  CHECK(t.grad(x)(0, 0) == 1.0);
}

TEST_CASE("every op matches central differences") {
  ad::Parameter a("a", random_matrix(4, 3, 1)), b("b", random_matrix(4, 3, 2));
  ad::Parameter w("w", random_matrix(3, 5, 3)), bias("bias", random_matrix(1, 5, 4));
  ad::Parameter row("row", random_matrix(1, 3, 5)), c("c", random_matrix(6, 3, 6));
  ad::Parameter table("table", random_matrix(7, 2, 7));
  const Matrix R5 = random_matrix(4, 5, 8), R3 = random_matrix(4, 3, 9), R6 = random_matrix(4, 6, 10);
  const std::vector<std::int64_t> idx = {0, 3, 3, 6, 1, 2, 5, 0};
  const Matrix gw = random_matrix(4, 2, 11, 0.0, 1.0);
  const Matrix R2 = random_matrix(4, 2, 12);

  using Build = std::function<ad::Var(ad::Tape&)>;
  std::vector<std::pair<std::string, Build>> cases = {
      {"affine", [&](ad::Tape& t) { return t.sum(t.hadamard(t.affine(t.param(a), t.param(w), t.param(bias)), t.constant(R5))); }},
      {"matmul", [&](ad::Tape& t) { return t.sum(t.hadamard(t.matmul(t.param(a), t.param(w)), t.constant(R5))); }},
      {"add", [&](ad::Tape& t) { return t.sum(t.square(t.add(t.param(a), t.param(b)))); }},
      {"sub", [&](ad::Tape& t) { return t.sum(t.square(t.sub(t.param(a), t.param(b)))); }},
      {"hadamard", [&](ad::Tape& t) { return t.sum(t.hadamard(t.hadamard(t.param(a), t.param(b)), t.constant(R3))); }},
      {"scale", [&](ad::Tape& t) { return t.sum(t.hadamard(t.scale(t.param(a), -2.5), t.constant(R3))); }},
      {"mul_row", [&](ad::Tape& t) { return t.sum(t.hadamard(t.mul_row(t.param(a), t.param(row)), t.constant(R3))); }},
      {"add_row", [&](ad::Tape& t) { return t.sum(t.square(t.add_row(t.param(a), t.param(row)))); }},
      {"sin", [&](ad::Tape& t) { return t.sum(t.hadamard(t.sin(t.scale(t.param(a), 3.0)), t.constant(R3))); }},
      {"cos", [&](ad::Tape& t) { return t.sum(t.hadamard(t.cos(t.scale(t.param(a), 3.0)), t.constant(R3))); }},
      {"tanh", [&](ad::Tape& t) { return t.sum(t.hadamard(t.tanh(t.scale(t.param(a), 2.0)), t.constant(R3))); }},
      {"silu", [&](ad::Tape& t) { return t.sum(t.hadamard(t.silu(t.scale(t.param(a), 2.0)), t.constant(R3))); }},
      {"relu", [&](ad::Tape& t) { return t.sum(t.hadamard(t.relu(t.param(a)), t.constant(R3))); }},
      {"exp", [&](ad::Tape& t) { return t.sum(t.hadamard(t.exp(t.param(a)), t.constant(R3))); }},
      {"sq_dist", [&](ad::Tape& t) { return t.sum(t.hadamard(t.sq_dist(t.param(a), t.param(c)), t.constant(R6))); }},
      {"slice_concat",
       [&](ad::Tape& t) {
         ad::Var s = t.slice_cols(t.param(a), 1, 2);
         std::vector<ad::Var> parts = {s, t.param(b), s};
         ad::Var cat = t.concat(parts);
         return t.sum(t.hadamard(t.slice_cols(cat, 0, 5), t.constant(R5)));
       }},
      {"gather_rows", [&](ad::Tape& t) { return t.sum(t.hadamard(t.gather_rows(t.param(table), idx, gw), t.constant(R2))); }},
      {"mean", [&](ad::Tape& t) { return t.mean(t.square(t.param(a))); }},
  };
  for (auto& [name, build] : cases) {
    CAPTURE(name);
    std::vector<ad::Parameter*> ps = {&a, &b, &w, &bias, &row, &c, &table};
    for (auto* p : ps) p->zero_grad();
    ad::Tape tape;
    tape.backward(build(tape));
    auto f = [&] {
      ad::Tape t2;
      return t2.value(build(t2))(0, 0);
    };
    for (auto* p : ps) {
      CAPTURE(p->name);
      Matrix num = fd_grad(*p, f);
      CHECK(rel_err(p->grad, num) < 1e-7);
    }
  }
}

TEST_CASE("input gradients are available") {
  ad::Tape t;
  Matrix X = random_matrix(3, 2, 21);
  Matrix W = random_matrix(2, 4, 22);
  ad::Var x = t.input(X, true);
  ad::Var y = t.sum(t.sin(t.matmul(x, t.constant(W))));
  t.backward(y);
  Matrix expect = (X * W).array().cos().matrix() * W.transpose();
  CHECK((t.grad(x) - expect).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("3-layer MLP gradient check") {
  ad::Parameter w1("w1", random_matrix(3, 8, 31)), b1("b1", random_matrix(1, 8, 32));
  ad::Parameter w2("w2", random_matrix(8, 8, 33)), b2("b2", random_matrix(1, 8, 34));
  ad::Parameter w3("w3", random_matrix(8, 2, 35)), b3("b3", random_matrix(1, 2, 36));
  const Matrix X = random_matrix(16, 3, 37), R = random_matrix(16, 2, 38);
  ad::Objective f = [&](ad::Tape& t) {
    ad::Var h = t.tanh(t.affine(t.constant(X), t.param(w1), t.param(b1)));
    h = t.tanh(t.affine(h, t.param(w2), t.param(b2)));
    ad::Var y = t.affine(h, t.param(w3), t.param(b3));
    return t.sum(t.hadamard(y, t.constant(R)));
  };
  std::vector<ad::Parameter*> ps = {&w1, &b1, &w2, &b2, &w3, &b3};
  auto rep = ad::grad_check(ps, f);
  CHECK(rep.checked.size() == 50);
  CHECK(rep.max_rel_error < 1e-5);
  CHECK(rep.passed());
}

TEST_CASE("backward leaves parameters unmodified") {
  ad::Parameter w("w", random_matrix(3, 3, 41));
  const Matrix before = w.value;
  ad::Tape t;
  t.backward(t.sum(t.tanh(t.matmul(t.constant(random_matrix(2, 3, 42)), t.param(w)))));
  CHECK(w.value == before);
}

TEST_CASE("errors") {
  SUBCASE("non-finite intermediate") {
    ad::Tape t;
    ad::Var x = t.input(m1(1000.0));
    try {
      t.exp(x);
      FAIL("expected overflow");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("numeric overflow at node 1") != std::string::npos);
    }
  }
  SUBCASE("shape mismatch names the node") {
    ad::Tape t;
    ad::Var a = t.input(Matrix::Zero(2, 3));
    ad::Var w = t.input(Matrix::Zero(2, 3));
    ad::Var b = t.input(Matrix::Zero(1, 3));
    try {
      t.affine(a, w, b);
      FAIL("expected shape error");
    } catch (const ShapeError& e) {
      CHECK(std::string(e.what()).find("node 3 (affine)") != std::string::npos);
    }
  }
  SUBCASE("backward before forward") {
    ad::Tape t;
    CHECK_THROWS_AS(t.backward(ad::Var{0}), UsageError);
  }
  SUBCASE("second backward") {
    ad::Tape t;
    ad::Var y = t.sum(t.input(m1(1.0), true));
    t.backward(y);
    CHECK_THROWS_AS(t.backward(y), UsageError);
  }
}

TEST_CASE("adam") {
  SUBCASE("first step by hand") {
    ad::Parameter w("w", m1(1.0));
    w.grad = m1(2.0);
    ad::AdamState s;
    s.opt.lr = 0.1;
    std::vector<ad::Parameter*> ps = {&w};
    ad::adam_step(s, ps);
    // t=1: m = 0.1*2, v = 0.001*4; mhat = 2, vhat = 4.
    const double mhat = (0.1 * 2.0) / (1.0 - 0.9), vhat = (0.001 * 4.0) / (1.0 - 0.999);
    CHECK(w.value(0, 0) == doctest::Approx(1.0 - 0.1 * mhat / (std::sqrt(vhat) + 1e-8)).epsilon(1e-14));
    CHECK(w.value(0, 0) == doctest::Approx(0.9).epsilon(1e-7));
    CHECK(s.t == 1);
  }
  SUBCASE("zero gradient") {
    ad::Parameter w("w", random_matrix(3, 3, 51));
    const Matrix before = w.value;
    ad::AdamState s;
    s.opt.lr = 0.1;
    std::vector<ad::Parameter*> ps = {&w};
    for (int i = 0; i < 3; ++i) ad::adam_step(s, ps);
    CHECK((w.value - before).cwiseAbs().maxCoeff() < 0.1 * 1e-6);
  }
  SUBCASE("deterministic") {
    ad::Parameter a("a", random_matrix(2, 2, 61)), b("a", random_matrix(2, 2, 61));
    a.grad = b.grad = random_matrix(2, 2, 62);
    ad::AdamState sa, sb;
    std::vector<ad::Parameter*> pa = {&a}, pb = {&b};
    ad::adam_step(sa, pa);
    ad::adam_step(sb, pb);
    CHECK(a.value == b.value);
  }
  SUBCASE("shape mismatch") {
    ad::Parameter w("w", random_matrix(2, 2, 71));
    w.grad = Matrix::Zero(3, 2);
    ad::AdamState s;
    std::vector<ad::Parameter*> ps = {&w};
    CHECK_THROWS_AS(ad::adam_step(s, ps), ShapeError);
  }
}

TEST_CASE("vector kernels agree with libm") {
  std::mt19937_64 rng(81);
  std::vector<double> x(10000), s(x.size()), c(x.size()), th(x.size());
  std::uniform_real_distribution<double> u(-2000.0, 2000.0);
  for (auto& v : x) v = u(rng);
  x[0] = 0.0;
  x[1] = -0.0;
  x[2] = 1e-300;
  vmath::sincos(x.data(), s.data(), c.data(), x.size());
  double es = 0, ec = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    es = std::max(es, std::fabs(s[i] - std::sin(x[i])));
    ec = std::max(ec, std::fabs(c[i] - std::cos(x[i])));
  }
  CHECK(es < 5e-16);
  CHECK(ec < 5e-16);
  std::vector<double> big = {1e6, -3e7, 12345678.9};
  std::vector<double> sb(3);
  vmath::sin(big.data(), sb.data(), 3);
  for (int i = 0; i < 3; ++i) CHECK(sb[i] == std::sin(big[i]));

  std::uniform_real_distribution<double> u2(-20.0, 20.0);
  for (auto& v : x) v = u2(rng);
  vmath::tanh(x.data(), th.data(), x.size());
  double et = 0;
  for (std::size_t i = 0; i < x.size(); ++i) et = std::max(et, std::fabs(th[i] - std::tanh(x[i])));
  CHECK(et < 1e-15);
}
