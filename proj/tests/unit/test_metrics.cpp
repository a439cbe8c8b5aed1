#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "nrf/error.hpp"
#include "nrf/metrics.hpp"
#include "nrf/train.hpp"
#include "mesh_fixture.hpp"
#include "test_util.hpp"

using namespace nrf;
using namespace nrf::metrics;
using nrf::testing::box_mesh;
using nrf::testing::random_matrix;

namespace {

Matrix filled(Index r, Index c, double v) { return Matrix::Constant(r, c, v); }

// Single-output model whose forward is exactly a x + b y + c z + d.
model::Model linear_model(const Vec3& g, double d, bool timed) {
  model::ModelConfig cfg;
  cfg.architecture = model::Architecture::Mlp;
  cfg.activation = model::Activation::Relu;
  cfg.layers = 1;
  cfg.width = 8;
  cfg.in_dim = timed ? 4 : 3;
  cfg.out_dim = 1;
  model::Model m(cfg);
  auto& W = m.params().at(*m.params().find("layer0.w")).value;
  auto& B = m.params().at(*m.params().find("layer0.b")).value;
  auto& Wo = m.params().at(*m.params().find("out.w")).value;
  auto& Bo = m.params().at(*m.params().find("out.b")).value;
  W.setZero();
  B.setZero();
  Wo.setZero();
  // relu(u) - relu(-u) = u
  for (int k = 0; k < 3; ++k) {
    W(k, 2 * k) = 1.0;
    W(k, 2 * k + 1) = -1.0;
    Wo(2 * k, 0) = g(k);
    Wo(2 * k + 1, 0) = -g(k);
  }
  Bo(0, 0) = d;
  m.normalization() = data::IoNormalization::identity(cfg.in_dim, 1);
  return m;
}

}  // namespace

TEST_CASE("rmse examples") {
  Matrix t = random_matrix(6, 2, 1);
  CHECK(rmse(t, t).cwiseAbs().maxCoeff() == 0.0);
  CHECK(rmse(t.array() + 2.0, t)(0) == doctest::Approx(2.0));
  Matrix a(2, 1), b(2, 1);
  a << 0, 2;
  b << 0, 0;
  CHECK(rmse(a, b)(0) == doctest::Approx(std::sqrt(2.0)));
  CHECK_THROWS_AS(rmse(a, t), ShapeError);
}

TEST_CASE("snr and psnr") {
  auto s = snr_psnr(filled(10, 1, 1.0), filled(10, 1, 2.0));
  CHECK(s.snr_db == doctest::Approx(6.020599913279624).epsilon(1e-12));
  CHECK(s.snr_db == doctest::Approx(10.0 * std::log10(4.0)).epsilon(1e-14));

  Matrix truth(2, 1), pred(2, 1);
  truth << 1.0, 0.0;
  pred << 1.0 + std::sqrt(0.02), 0.0;  // mse 0.01, max 1
  CHECK(snr_psnr(pred, truth).psnr_db == doctest::Approx(20.0).epsilon(1e-12));

  auto inf = snr_psnr(truth, truth);
  CHECK(inf.snr_db == kInfiniteDb);
  CHECK(inf.psnr_db == kInfiniteDb);
  CHECK_THROWS_AS(snr_psnr(filled(3, 1, 1.0), filled(3, 1, 0.0)), DataError);

  // Agreement with the RMSE route.
  Matrix T = random_matrix(40, 3, 2), P = T + 0.1 * random_matrix(40, 3, 3);
  const RowVector r = rmse(P, T);
  const double mse = r.squaredNorm() / 3.0;
  double power = 0.0;
  for (Index i = 0; i < T.size(); ++i) power += T.data()[i] * T.data()[i];
  power /= static_cast<double>(T.size());
  CHECK(std::fabs(snr_psnr(P, T).snr_db - 10.0 * std::log10(power / mse)) < 1e-12);
}

TEST_CASE("raw byte figures") {
  CHECK(raw_field_bytes(554474, 4, 1) == 8871584u);
  CHECK(std::round(raw_field_bytes(554474, 4, 1) / 1024.0 / 1024.0 * 10) / 10 == 8.5);
  const double gb = raw_field_bytes(554474, 4, 180) / 1024.0 / 1024.0 / 1024.0;
  CHECK(gb == doctest::Approx(1.487).epsilon(1e-3));
  CHECK(std::round(gb * 10) / 10 == 1.5);
  CHECK(std::round(raw_field_bytes(2354, 4, 160) / 1024.0 / 1024.0 * 10) / 10 == 5.7);
}

TEST_CASE("compression report") {
  model::ModelConfig cfg;
  cfg.layers = 2;
  cfg.width = 10;
  cfg.in_dim = 4;
  cfg.out_dim = 4;
  model::Model m(cfg);
  auto c = compression_report(m, 2354, 4, 160);
  CHECK(c.raw_bytes == 2354u * 4 * 4 * 160);
  CHECK(c.parameter_count == (4 * 10 + 10) + (10 * 10 + 10) + (10 * 4 + 4));
  CHECK(c.checkpoint_bytes == model::encode_checkpoint(m).size());
  CHECK(c.eq32_bytes == c.checkpoint_bytes - 4 * m.params().stored_count());
  CHECK(c.ratio == static_cast<double>(c.raw_bytes) / static_cast<double>(c.eq32_bytes));
}

TEST_CASE("metrics are invariant under permutation") {
  Matrix T = random_matrix(30, 2, 4), P = T + 0.3 * random_matrix(30, 2, 5);
  std::vector<Index> perm(30);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(1));
  Matrix Tp(30, 2), Pp(30, 2);
  for (Index i = 0; i < 30; ++i) {
    Tp.row(i) = T.row(perm[static_cast<std::size_t>(i)]);
    Pp.row(i) = P.row(perm[static_cast<std::size_t>(i)]);
  }
  CHECK((rmse(P, T) - rmse(Pp, Tp)).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(std::fabs(snr_psnr(P, T).snr_db - snr_psnr(Pp, Tp).snr_db) < 1e-12);
  CHECK(std::fabs(norm_rmse(P, T, {0, 1}) - norm_rmse(Pp, Tp, {0, 1})) < 1e-14);
}

TEST_CASE("norm rmse") {
  Matrix a(2, 2), b(2, 2);
  a << 3, 4, 0, 0;
  b << 0, 0, 1, 0;
  CHECK(norm_rmse(a, b, {0, 1}) == doctest::Approx(std::sqrt((25.0 + 1.0) / 2.0)));
  CHECK_THROWS_AS(norm_rmse(a, b, {2}), ConfigError);
}

TEST_CASE("histogram and report formatting") {
  auto h = histogram({0.0, 0.1, 0.5, 1.0}, 2);
  CHECK(h.edges == std::vector<double>{0.0, 0.5, 1.0});
  CHECK(h.counts == std::vector<std::size_t>{2, 2});
  CHECK(histogram({2.0, 2.0}, 3).counts == std::vector<std::size_t>{2, 0, 0});

  CHECK(format_number(0.1) == "0.1");
  CHECK(format_number(kInfiniteDb) == "inf");
  CHECK(format_number(8871584) == "8871584");
  EvalReport r;
  r.add("rmse.p", 0.25);
  r.add("snr_db", kInfiniteDb);
  r.add("architecture", std::string("mlp"));
  CHECK(r.to_text() == "rmse.p = 0.25\nsnr_db = inf\narchitecture = mlp\n");
  CHECK(r.to_tsv() == "key\tvalue\nrmse.p\t0.25\nsnr_db\tinf\narchitecture\tmlp\n");
  CHECK(r.get("snr_db") == std::string("inf"));
  CHECK(!r.get("missing"));
}

TEST_CASE("polyline sampling") {
  Matrix v(3, 3);
  v << 0, 0, 0, 1, 0, 0, 1, 2, 0;
  Matrix s = sample_polyline(v, 4);
  CHECK(s(0, 0) == 0.0);
  CHECK(s(3, 0) == doctest::Approx(3.0));
  CHECK(s(1, 1) == doctest::Approx(1.0));
  CHECK(s(2, 2) == doctest::Approx(1.0));
  CHECK((s.row(3).tail(3) - v.row(2)).norm() < 1e-12);
  CHECK_THROWS_AS(sample_polyline(v.topRows(1), 4), DataError);
}

TEST_CASE("grid validation on node-coincident grid equals nodal rmse") {
  // Undistorted box: lattice nodes are mesh nodes.
  auto mesh = box_mesh(4, 2, 1, 3, 0.0);
  model::Model m = linear_model(Vec3(0.3, -0.2, 0.9), 0.1, true);
  GridOptions opt;
  opt.n = 5;
  opt.node_coincident = true;
  auto g = grid_validation(m, mesh, opt);
  CHECK(g.points_total == 250);
  CHECK(g.points_inside == 250);

  auto ds = data::tetmesh_to_dataset(mesh);
  const RowVector nodal = rmse(m.predict(ds.coords), ds.values);
  CHECK(std::fabs(g.rmse(0) - nodal(0)) < 1e-12);

  opt.steps = {5};
  CHECK_THROWS_AS(grid_validation(m, mesh, opt), ConfigError);
}

TEST_CASE("grid validation of a linear field is exact") {
  auto mesh = box_mesh(3, 1, 1, 4);
  const Vec3 g(1.5, -0.5, 2.0);
  for (Index i = 0; i < mesh.nodes.rows(); ++i) mesh.values[0](i, 0) = mesh.nodes.row(i).dot(g) - 0.25;
  model::Model m = linear_model(g, -0.25, false);
  GridOptions opt;
  opt.n = 7;
  auto r = grid_validation(m, mesh, opt, 3);
  CHECK(r.points_inside > 0);
  CHECK(r.rmse(0) < 1e-12);
  CHECK(r.error.cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(grid_validation(linear_model(g, 0, true), mesh, opt), ShapeError);
}

TEST_CASE("grid points outside the mesh are skipped") {
  // Single tet: half of the box is empty.
  data::TetMesh mesh;
  mesh.nodes.resize(4, 3);
  mesh.nodes << 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1;
  mesh.tets = {{0, 1, 2, 3}};
  mesh.values = {Matrix::Zero(4, 1)};
  model::Model m = linear_model(Vec3::Zero(), 0.0, false);
  GridOptions opt;
  opt.n = 10;
  auto r = grid_validation(m, mesh, opt);
  Index inside = 0;
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j)
      for (int k = 0; k < 10; ++k) inside += (i + j + k + 1.5) / 10.0 <= 1.0;
  CHECK(r.points_inside == inside);
  CHECK(r.points_total == 1000);
}

TEST_CASE("overfit oscillatory model interpolates worse than it fits") {
  // Random nodal data on a coarse mesh, fitted hard by a high-frequency network.
  auto mesh = box_mesh(3, 1, 1, 8, 0.0);
  auto ds = data::tetmesh_to_dataset(mesh);
  model::ModelConfig cfg;
  cfg.architecture = model::Architecture::Siren;
  cfg.layers = 3;
  cfg.width = 64;
  cfg.in_dim = 3;
  cfg.out_dim = 1;
  cfg.omega0 = 60.0;
  cfg.seed = 1;
  model::Model m(cfg);
  train::TrainConfig tc;
  tc.iterations = 1500;
  tc.batch_size = 64;
  tc.lr = 1e-3;
  train::train(m, ds, tc);
  const double nodal = rmse(m.predict(ds.coords), ds.values)(0);
  GridOptions opt;
  opt.n = 12;
  const double grid = grid_validation(m, mesh, opt).rmse(0);
  MESSAGE("nodal rmse " << nodal << ", grid rmse " << grid);
  CHECK(grid > 5.0 * nodal);
}
