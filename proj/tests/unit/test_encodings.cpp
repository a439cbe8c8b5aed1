#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "nrf/encoding.hpp"
#include "nrf/error.hpp"
#include "nrf/grad_check.hpp"
#include "test_util.hpp"

using namespace nrf;
using namespace nrf::enc;
using nrf::testing::random_matrix;

namespace {

const double kSqrt2 = std::sqrt(2.0);

// Records the encoding of X and returns its value.
Matrix run(const Encoding& e, ParameterStore& store, const Matrix& X) {
  ad::Tape t;
  Binder bind(t, std::as_const(store));
  return t.value(e.record(bind, t.constant(X)));
}

// Independent d-linear evaluation of one level inside an explicitly chosen
// cell; fractional offsets may equal 1 on the far face.
RowVector eval_in_cell(const Matrix& table, const std::vector<double>& x, const std::vector<std::int64_t>& cell, int R,
                       int log2T) {
  const int d = static_cast<int>(x.size());
  const bool dense = std::pow(R + 1.0, d) <= std::ldexp(1.0, log2T);
  RowVector out = RowVector::Zero(table.cols());
  for (int c = 0; c < (1 << d); ++c) {
    std::vector<std::int64_t> corner(static_cast<std::size_t>(d));
    double w = 1.0;
    for (int k = 0; k < d; ++k) {
      const bool hi = (c >> k) & 1;
      const double f = x[static_cast<std::size_t>(k)] * R - static_cast<double>(cell[static_cast<std::size_t>(k)]);
      corner[static_cast<std::size_t>(k)] = cell[static_cast<std::size_t>(k)] + hi;
      w *= hi ? f : 1.0 - f;
    }
    std::int64_t idx = 0;
    if (dense) {
      std::int64_t stride = 1;
      for (int k = 0; k < d; ++k) {
        idx += corner[static_cast<std::size_t>(k)] * stride;
        stride *= R + 1;
      }
    } else {
      idx = mhe_hash(corner, log2T);
    }
    out += w * table.row(idx);
  }
  return out;
}

}  // namespace

TEST_CASE("gaussian PE examples") {
  std::vector<double> f = {0.3, -7.0, 12.5};
  for (double v : encode_gaussian_pe(0.0, f)) CHECK(v == kSqrt2);
  std::vector<double> fp = {1.7}, fm = {-1.7};
  CHECK(encode_gaussian_pe(0.37, fp) == encode_gaussian_pe(0.37, fm));
  auto e = encode_gaussian_pe(std::numbers::pi, std::vector<double>{1.0, 2.0});
  CHECK(e[0] == doctest::Approx(-kSqrt2).epsilon(1e-15));
  CHECK(e[1] == doctest::Approx(kSqrt2).epsilon(1e-15));
}

TEST_CASE("fixed PE examples") {
  CHECK(encode_fixed_pe_2l(0.0, 3) == std::vector<double>{0, 0, 0, 1, 1, 1});
  auto e = encode_fixed_pe_2l(std::numbers::pi / 2, 2);
  const std::vector<double> expect = {1, 0, 0, -1};
  for (int i = 0; i < 4; ++i) CHECK(e[static_cast<std::size_t>(i)] == doctest::Approx(expect[static_cast<std::size_t>(i)]).epsilon(1e-15));
  for (int L = 1; L < 9; ++L) CHECK(encode_fixed_pe_2l(0.3, L).size() == static_cast<std::size_t>(2 * L));
}

TEST_CASE("group encoding") {
  Rng rng(1);
  SUBCASE("identity repeats") {
    EncodingSpec s;
    s.kind = EncodingKind::Group;
    s.frequencies = 3;
    s.rules = {GroupRule::Identity, GroupRule::Identity};
    ParameterStore store;
    Encoding e(s, 2, store, rng);
    Matrix X(1, 2);
    X << 0.25, -0.5;
    Matrix out = run(e, store, X);
    Matrix expect(1, 6);
    expect << 0.25, 0.25, 0.25, -0.5, -0.5, -0.5;
    CHECK(out == expect);
  }
  SUBCASE("linear at init equals identity") {
    EncodingSpec si, sl;
    si.kind = sl.kind = EncodingKind::Group;
    si.rules = {GroupRule::Identity, GroupRule::FixedPe2L};
    sl.rules = {GroupRule::Linear, GroupRule::FixedPe2L};
    ParameterStore a, b;
    Encoding ei(si, 2, a, rng), el(sl, 2, b, rng);
    Matrix X = random_matrix(9, 2, 3);
    CHECK(run(ei, a, X) == run(el, b, X));
    CHECK(b.trainable_count() == 2);
  }
  SUBCASE("identity space, fixed PE time") {
    EncodingSpec s;
    s.kind = EncodingKind::Group;
    s.frequencies = 2;
    s.rules = {GroupRule::Identity, GroupRule::FixedPe2L};
    CHECK(encoding_width(s, 2) == 2 + 4);
    ParameterStore store;
    Encoding e(s, 2, store, rng);
    Matrix X(1, 2);
    X << 0.1, 0.7;
    Matrix out = run(e, store, X);
    auto pe = encode_fixed_pe_2l(0.7, 2);
    CHECK(out(0, 0) == 0.1);
    CHECK(out(0, 1) == 0.1);
    for (int i = 0; i < 4; ++i) CHECK(out(0, 2 + i) == doctest::Approx(pe[static_cast<std::size_t>(i)]).epsilon(1e-15));
  }
  SUBCASE("unassigned input") {
    EncodingSpec s;
    s.kind = EncodingKind::Group;
    s.rules = {GroupRule::Identity};
    CHECK_THROWS_AS(validate(s, 2), ConfigError);
  }
}

TEST_CASE("encoding records match the scalar definitions") {
  Rng rng(5);
  EncodingSpec s;
  s.kind = EncodingKind::GaussianPe;
  s.frequencies = 6;
  s.bandwidth = 10.0;
  ParameterStore store;
  Encoding e(s, 2, store, rng);
  CHECK(e.width() == 12);
  Matrix X = random_matrix(5, 2, 6);
  Matrix out = run(e, store, X);
  for (int j = 0; j < 2; ++j) {
    const Matrix& f = store.at(*store.find("enc.gauss.freq" + std::to_string(j))).value;
    CHECK_FALSE(store.at(*store.find("enc.gauss.freq" + std::to_string(j))).trainable);
    std::vector<double> freqs(f.data(), f.data() + f.size());
    for (Index r = 0; r < 5; ++r) {
      auto ref = encode_gaussian_pe(X(r, j), freqs);
      for (int i = 0; i < 6; ++i) CHECK(out(r, j * 6 + i) == doctest::Approx(ref[static_cast<std::size_t>(i)]).epsilon(1e-14));
    }
  }
  EncodingSpec s2;
  s2.kind = EncodingKind::FixedPe2L;
  s2.frequencies = 4;
  ParameterStore store2;
  Encoding e2(s2, 3, store2, rng);
  CHECK(e2.width() == 24);
  Matrix out2 = run(e2, store2, X.leftCols(1).replicate(1, 3));
  auto ref = encode_fixed_pe_2l(X(0, 0), 4);
  for (int i = 0; i < 8; ++i) CHECK(out2(0, 16 + i) == doctest::Approx(ref[static_cast<std::size_t>(i)]).epsilon(1e-15));
}

TEST_CASE("hash function") {
  std::vector<std::int64_t> z = {0, 0, 0}, one = {1, 0, 0};
  CHECK(mhe_hash(z, 19) == 0u);
  CHECK(mhe_hash(one, 19) == 1u);
  CHECK(mhe_hash(one, 0 + 1) == 1u);

  // Chi-square over 256 coarse buckets for 1e5 random corners.
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::int64_t> u(0, 1 << 20);
  std::vector<double> hist(256, 0.0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    std::vector<std::int64_t> c = {u(rng), u(rng), u(rng)};
    const auto h = mhe_hash(c, 19);
    CHECK(h < (1u << 19));
    hist[h >> 11] += 1.0;
  }
  double chi2 = 0.0;
  const double expect = n / 256.0;
  for (double c : hist) chi2 += (c - expect) * (c - expect) / expect;
  // 255 degrees of freedom: the 0.999 quantile is about 330.
  CHECK(chi2 < 330.0);
}

TEST_CASE("level resolutions") {
  auto r = mhe_level_resolutions(2, 32, 16);
  CHECK(r.size() == 16);
  CHECK(r.front() == 2);
  CHECK(r.back() == 32);
  for (int v : mhe_level_resolutions(2, 2, 5)) CHECK(v == 2);
  auto big = mhe_level_resolutions(2, 512, 16);
  for (std::size_t i = 1; i < big.size(); ++i) CHECK(big[i] >= big[i - 1]);
  // Independent evaluation of floor(R_min * b^l).
  const double b = std::exp((std::log(512.0) - std::log(2.0)) / 15.0);
  for (int l = 1; l < 15; ++l) CHECK(big[static_cast<std::size_t>(l)] == static_cast<int>(std::floor(2.0 * std::pow(b, l))));
  CHECK(mhe_level_resolutions(4, 9, 1) == std::vector<int>{4});
}

TEST_CASE("hash encoding values") {
  SUBCASE("1-D toy") {
    HashGridSpec s;
    s.levels = 1;
    s.features = 1;
    s.log2_table_size = 4;
    s.min_resolution = s.max_resolution = 4;
    Matrix table = Matrix::Zero(16, 1);
    const double a = 0.7, b = -1.3;
    table(0, 0) = a;
    table(1, 0) = b;
    std::vector<Matrix> tables = {table};
    Matrix x = Matrix::Constant(1, 1, 0.125);
    Matrix out = mhe_encode(x, tables, s, Matrix(1, 0));
    CHECK(out(0, 0) == doctest::Approx(0.5 * a + 0.5 * b).epsilon(1e-15));
  }
  SUBCASE("zero tables give zeros then aux") {
    HashGridSpec s;
    s.levels = 3;
    s.log2_table_size = 6;
    s.aux_count = 1;
    std::vector<Matrix> tables(3, Matrix::Zero(64, 2));
    Matrix x = random_matrix(4, 2, 9, 0.0, 1.0);
    Matrix aux = random_matrix(4, 1, 10);
    Matrix out = mhe_encode(x, tables, s, aux);
    CHECK(out.cols() == 3 * 2 + 1);
    CHECK(out.leftCols(6).cwiseAbs().maxCoeff() == 0.0);
    CHECK(out.col(6) == aux.col(0));
  }
  SUBCASE("vertex hit returns the vertex row") {
    HashGridSpec s;
    s.levels = 1;
    s.features = 3;
    s.log2_table_size = 8;
    s.min_resolution = s.max_resolution = 20;  // 21^2 > 256: hashed
    CHECK_FALSE(mhe_level_is_dense(20, 2, 8));
    std::vector<Matrix> tables = {random_matrix(256, 3, 11)};
    Matrix x(1, 2);
    x << 7.0 / 20.0, 13.0 / 20.0;
    Matrix out = mhe_encode(x, tables, s, Matrix(1, 0));
    std::vector<std::int64_t> corner = {7, 13};
    RowVector row = tables[0].row(mhe_hash(corner, 8));
    CHECK((out.row(0) - row).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("dense coarse levels") {
    auto lk = mhe_lookup(random_matrix(50, 2, 12, 0.0, 1.0), 3, 4);
    for (auto i : lk.index) CHECK(i < 16);
    CHECK(mhe_level_is_dense(3, 2, 4));
  }
}

TEST_CASE("hash encoding is continuous across cell faces") {
  HashGridSpec s;
  s.levels = 4;
  s.features = 2;
  s.log2_table_size = 10;
  s.min_resolution = 3;
  s.max_resolution = 40;
  const auto res = mhe_level_resolutions(3, 40, 4);
  std::vector<Matrix> tables;
  for (int l = 0; l < 4; ++l) tables.push_back(random_matrix(1024, 2, 20 + static_cast<std::uint64_t>(l)));
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    const int l = trial % 4;
    const int R = res[static_cast<std::size_t>(l)];
    std::uniform_int_distribution<int> face(1, R - 1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> x = {u(rng), u(rng), u(rng)};
    const int k = face(rng);
    x[0] = static_cast<double>(k) / R;
    std::vector<std::int64_t> cell(3);
    for (int d = 1; d < 3; ++d) cell[static_cast<std::size_t>(d)] = std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(x[static_cast<std::size_t>(d)] * R)), R - 1);
    cell[0] = k - 1;
    RowVector left = eval_in_cell(tables[static_cast<std::size_t>(l)], x, cell, R, 10);
    cell[0] = k;
    RowVector right = eval_in_cell(tables[static_cast<std::size_t>(l)], x, cell, R, 10);
    Matrix xm(1, 3);
    xm << x[0], x[1], x[2];
    Matrix enc = mhe_encode(xm, tables, s, Matrix(1, 0));
    CHECK((left - right).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((enc.block(0, 2 * l, 1, 2) - right).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("hash encoding gradients w.r.t. tables") {
  Rng rng(17);
  EncodingSpec s;
  s.kind = EncodingKind::HashGrid;
  s.hash.levels = 3;
  s.hash.features = 2;
  s.hash.log2_table_size = 7;
  s.hash.min_resolution = 2;
  s.hash.max_resolution = 13;
  ParameterStore store;
  Encoding e(s, 2, store, rng);
  for (auto& p : store.all()) p.value = random_matrix(p.value.rows(), p.value.cols(), 18);
  // Keep points at least 1e-3 cell widths from any face.
  Matrix X(64, 2);
  std::mt19937_64 g(19);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const auto res = mhe_level_resolutions(2, 13, 3);
  for (Index r = 0; r < X.rows(); ++r) {
    for (int d = 0; d < 2; ++d) {
      double v;
      bool ok;
      do {
        v = u(g);
        ok = true;
        for (int R : res) {
          const double p = (v + 1.0) * 0.5 * R;
          if (std::fabs(p - std::round(p)) < 1e-3) ok = false;
        }
      } while (!ok);
      X(r, d) = v;
    }
  }
  const Matrix Rw = random_matrix(64, 6, 20);
  ad::Objective f = [&](ad::Tape& t) {
    Binder bind(t, store);
    return t.sum(t.hadamard(t.square(e.record(bind, t.constant(X))), t.constant(Rw)));
  };
  auto ps = store.trainable();
  ad::GradCheckOptions opt;
  opt.coordinates = 200;
  auto rep = ad::grad_check(ps, f, opt);
  CHECK(rep.max_rel_error < 1e-5);
}

TEST_CASE("hash encoding clamps with a count") {
  Rng rng(23);
  EncodingSpec s;
  s.kind = EncodingKind::HashGrid;
  s.hash.levels = 2;
  s.hash.log2_table_size = 6;
  ParameterStore store;
  Encoding e(s, 2, store, rng);
  CHECK(e.width() == 4);
  Matrix X(3, 2);
  X << 0.0, 0.0, 1.5, 0.0, -1.0, 1.0;
  Matrix out = run(e, store, X);
  CHECK(e.clamp_count() == 1);
  Matrix Xc = X;
  Xc(1, 0) = 1.0;
  CHECK(out == run(e, store, Xc));
}

TEST_CASE("encoding widths") {
  EncodingSpec s;
  s.frequencies = 5;
  s.kind = EncodingKind::None;
  CHECK(encoding_width(s, 3) == 3);
  s.kind = EncodingKind::GaussianPe;
  CHECK(encoding_width(s, 3) == 15);
  s.kind = EncodingKind::FixedPe2L;
  CHECK(encoding_width(s, 3) == 30);
  s.kind = EncodingKind::Group;
  s.rules = {GroupRule::Linear, GroupRule::GaussianPe, GroupRule::FixedPe2L};
  CHECK(encoding_width(s, 3) == 5 + 5 + 10);
  s.kind = EncodingKind::HashGrid;
  s.hash.levels = 16;
  s.hash.features = 2;
  s.hash.aux_count = 1;
  CHECK(encoding_width(s, 3) == 33);
}
