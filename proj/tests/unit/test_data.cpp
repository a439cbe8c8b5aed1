#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <map>
#include <random>
#include <string>

#include "nrf/binio.hpp"
#include "nrf/error.hpp"
#include "nrf/field_dataset.hpp"
#include "nrf/pgm.hpp"
#include "nrf/point_field.hpp"
#include "nrf/tet_mesh.hpp"
#include "mesh_fixture.hpp"

using namespace nrf;
using namespace nrf::data;
using nrf::testing::box_mesh;

namespace {

const std::filesystem::path kData = NRF_TEST_DATA_DIR;

bool contains(const std::string& s, std::string_view sub) { return s.find(sub) != std::string::npos; }

TetMesh unit_tet() {
  TetMesh m;
  m.nodes.resize(4, 3);
  m.nodes << 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1;
  m.tets = {{0, 1, 2, 3}};
  Matrix v(4, 1);
  v << 0, 1, 2, 3;
  m.values = {v};
  return m;
}

}  // namespace

TEST_CASE("pgm examples") {
  auto one = load_pgm(kData / "one_pixel_p2.pgm");
  CHECK(one.width == 1);
  CHECK(one.pixels == std::vector<double>{1.0});

  const std::string p5 = std::string("P5\n2 2\n255\n") + std::string("\x00\xff\xff\x00", 4);
  auto img = parse_pgm(p5);
  CHECK(img.pixels == std::vector<double>{0, 1, 1, 0});
  CHECK(img.at(1, 0) == 1.0);
  CHECK(img.at(1, 1) == 0.0);

  auto wide = load_pgm(kData / "wide_p5.pgm");
  CHECK(wide.width == 2);
  CHECK(wide.pixels[0] == 258.0 / 65535.0);
  CHECK(wide.pixels[1] == 1.0);

  const std::string p2 = "P2\n# comment\n3 1\n10\n0 5 10\n";
  CHECK(parse_pgm(p2).pixels == std::vector<double>{0.0, 0.5, 1.0});
}

TEST_CASE("pgm errors carry the byte offset") {
  for (const char* f : {"bad_header.pgm", "truncated.pgm"}) {
    try {
      load_pgm(kData / f);
      FAIL("expected a parse error for " << f);
    } catch (const ParseError& e) {
      CHECK(contains(e.what(), "byte"));
    }
  }
  CHECK_THROWS_AS(parse_pgm("P6\n1 1\n255\n\x00"), ParseError);
  CHECK_THROWS_AS(parse_pgm("P2\n1 1\n255\n300\n"), ParseError);
  CHECK_THROWS_AS(parse_pgm("P2\n0 1\n255\n"), ParseError);
}

TEST_CASE("pgm round trip") {
  GreyImage img;
  img.width = 5;
  img.height = 3;
  for (int i = 0; i < 15; ++i) img.pixels.push_back(i / 14.0 > 1 ? 1 : double(i * 17) / 255.0);
  for (bool binary : {true, false}) {
    auto back = parse_pgm(encode_pgm(img, 255, binary));
    CHECK(back.pixels == img.pixels);
  }
  img.pixels[3] = 1234.0 / 65535.0;
  CHECK(parse_pgm(encode_pgm(img, 65535, true)).pixels[3] == img.pixels[3]);
}

TEST_CASE("image to dataset") {
  GreyImage img;
  img.width = img.height = 2;
  img.pixels = {0.1, 0.2, 0.3, 0.4};
  auto ds = image_to_dataset(img);
  CHECK(ds.size() == 4);
  CHECK(ds.in_dim() == 2);
  CHECK(ds.out_dim() == 1);
  CHECK(ds.coords(0, 0) == 0.25);
  CHECK(ds.coords(0, 1) == 0.25);
  CHECK(ds.coords(3, 0) == 0.75);
  for (int i = 0; i < 4; ++i) CHECK(ds.values(i, 0) == img.pixels[static_cast<std::size_t>(i)]);
  CHECK(ds.lo(0) == 0.0);
  CHECK(ds.hi(1) == 1.0);
}

TEST_CASE("point field") {
  auto ds = load_point_field(kData / "two_rows.txt");
  CHECK(ds.size() == 2);
  CHECK(ds.in_dim() == 1);
  CHECK(ds.out_dim() == 1);
  CHECK(ds.values(1, 0) == 2.5);
  CHECK(ds.hi(0) == 1.0);

  CHECK_THROWS_AS(load_point_field(kData / "no_header.txt"), ParseError);
  try {
    load_point_field(kData / "ragged.txt");
    FAIL("ragged table accepted");
  } catch (const ParseError& e) {
    CHECK(contains(e.what(), "line 3"));
  }

  PointTable t;
  t.names = {"t", "x", "p", "vx"};
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  t.data.resize(17, 4);
  for (Index i = 0; i < t.data.size(); ++i) t.data.data()[i] = u(rng);
  t.data(0, 0) = 1.0 / 3.0;
  for (auto fmt : {TableFormat::Text, TableFormat::Binary}) {
    auto back = parse_point_table(encode_point_table(t, fmt));
    CHECK(back.names == t.names);
    CHECK(back.data == t.data);
  }
  auto d = table_to_dataset(t);
  CHECK(d.coord_names == std::vector<std::string>{"x", "t"});
  CHECK(d.time_column == 1);
  CHECK(d.value_names == std::vector<std::string>{"p", "vx"});
  CHECK(d.coords(4, 1) == t.data(4, 0));
  auto sub = table_to_dataset(t, {"vx"});
  CHECK(sub.out_dim() == 1);
  CHECK(sub.values(2, 0) == t.data(2, 3));
  CHECK_THROWS_AS(table_to_dataset(t, {"vy"}), DataError);
  CHECK(format_for_path("a.txt") == TableFormat::Text);
  CHECK(format_for_path("a.pts") == TableFormat::Binary);
}

TEST_CASE("normalize_io") {
  FieldDataset ds;
  ds.coords.resize(2, 1);
  ds.coords << 0, 10;
  ds.values.resize(2, 2);
  ds.values << 3, 1, 3, 5;
  ds.compute_box();
  auto n = normalize_io(ds);
  CHECK(n.X(0, 0) == -1.0);
  CHECK(n.X(1, 0) == 1.0);
  CHECK(n.Y(0, 0) == 0.0);
  CHECK(n.Y(1, 0) == 0.0);
  CHECK(n.norm.out_scale(0) == 1.0);
  CHECK(n.norm.out_shift(0) == 3.0);
  CHECK(n.Y(0, 1) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(n.Y(1, 1) == doctest::Approx(1.0).epsilon(1e-15));

  FieldDataset r;
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(7.0, 40.0);
  r.coords.resize(100, 3);
  r.values.resize(100, 2);
  for (Index i = 0; i < r.coords.size(); ++i) r.coords.data()[i] = g(rng);
  for (Index i = 0; i < r.values.size(); ++i) r.values.data()[i] = g(rng);
  r.compute_box();
  auto rn = normalize_io(r);
  CHECK(rn.X.cwiseAbs().maxCoeff() <= 1.0);
  CHECK(rn.Y.colwise().mean().cwiseAbs().maxCoeff() < 1e-12);
  CHECK((rn.norm.denormalize_outputs(rn.Y) - r.values).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((rn.norm.normalize_outputs(r.values) - rn.Y).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("dataset validation") {
  FieldDataset ds;
  CHECK_THROWS_AS(ds.validate(), DataError);
  ds.coords = Matrix::Zero(2, 1);
  ds.values = Matrix::Zero(2, 1);
  ds.compute_box();
  ds.validate();
  ds.values(1, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(ds.validate(), DataError);
}

TEST_CASE("barycentric interpolation examples") {
  TetMesh m = unit_tet();
  check_and_orient(m);
  TetLocator loc(m);
  auto hit = loc.locate(Vec3(0.25, 0.25, 0.25));
  REQUIRE(hit);
  for (double l : hit->lambda) CHECK(l == doctest::Approx(0.25).epsilon(1e-15));
  auto v = barycentric_interpolate(m, loc, m.values[0], Vec3(0.25, 0.25, 0.25));
  REQUIRE(v);
  CHECK((*v)(0) == doctest::Approx(1.5).epsilon(1e-15));
  for (int i = 0; i < 4; ++i) {
    Vec3 q = m.nodes.row(i).transpose();
    auto at = barycentric_interpolate(m, loc, m.values[0], q);
    REQUIRE(at);
    CHECK((*at)(0) == m.values[0](i, 0));
  }
  CHECK_FALSE(barycentric_interpolate(m, loc, m.values[0], Vec3(0.5, 0.5, 0.5)));
  CHECK_FALSE(loc.locate(Vec3(-0.1, 0.1, 0.1)));
}

TEST_CASE("orientation and validation") {
  TetMesh m = unit_tet();
  std::swap(m.tets[0][1], m.tets[0][2]);
  check_and_orient(m);
  const auto& t = m.tets[0];
  auto p = [&](int i) -> Vec3 { return m.nodes.row(t[static_cast<std::size_t>(i)]).transpose(); };
  CHECK(tet_signed_volume(p(0), p(1), p(2), p(3)) == doctest::Approx(1.0 / 6.0));

  TetMesh flat = unit_tet();
  flat.nodes(3, 2) = 0.0;
  CHECK_THROWS_AS(check_and_orient(flat), DataError);
  TetMesh bad = unit_tet();
  bad.tets[0][3] = 9;
  CHECK_THROWS_AS(check_and_orient(bad), DataError);
}

TEST_CASE("tet mesh box: locator, centroids, continuity") {
  TetMesh m = box_mesh(4, 2, 2, 5);
  TetLocator loc(m);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  for (std::size_t e = 0; e < m.tets.size(); ++e) {
    Vec3 c = Vec3::Zero();
    RowVector mean = RowVector::Zero(2);
    for (int i : m.tets[e]) {
      c += m.nodes.row(i).transpose();
      mean += m.values[1].row(i);
    }
    c /= 4.0;
    mean /= 4.0;
    auto hit = loc.locate(c);
    REQUIRE(hit);
    CHECK(hit->tet == static_cast<int>(e));
    auto v = barycentric_interpolate(m, loc, m.values[1], c);
    CHECK(((*v) - mean).cwiseAbs().maxCoeff() < 1e-12);
  }

  // Independent brute-force location agrees with the bin grid.
  for (int trial = 0; trial < 500; ++trial) {
    Vec3 q(u(rng), u(rng), u(rng));
    int brute = -1;
    for (std::size_t e = 0; e < m.tets.size() && brute < 0; ++e) {
      Eigen::Matrix4d A;
      for (int i = 0; i < 4; ++i) {
        A.col(i).head<3>() = m.nodes.row(m.tets[e][static_cast<std::size_t>(i)]).transpose();
        A(3, i) = 1.0;
      }
      Eigen::Vector4d lam = A.fullPivLu().solve(Eigen::Vector4d(q(0), q(1), q(2), 1.0));
      if (lam.minCoeff() >= -1e-10) brute = static_cast<int>(e);
    }
    auto hit = loc.locate(q);
    CHECK((hit ? hit->tet : -1) == brute);
    if (hit) {
      double s = 0.0;
      for (double l : hit->lambda) {
        s += l;
        CHECK(l >= -1e-10);
        CHECK(l <= 1.0 + 1e-10);
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
  }

  // Points on shared faces evaluate equally from both tets.
  std::map<std::array<int, 3>, std::vector<int>> faces;
  for (std::size_t e = 0; e < m.tets.size(); ++e)
    for (int skip = 0; skip < 4; ++skip) {
      std::array<int, 3> f;
      int k = 0;
      for (int i = 0; i < 4; ++i)
        if (i != skip) f[static_cast<std::size_t>(k++)] = m.tets[e][static_cast<std::size_t>(i)];
      std::sort(f.begin(), f.end());
      faces[f].push_back(static_cast<int>(e));
    }
  int shared = 0;
  for (const auto& [f, ts] : faces) {
    if (ts.size() != 2) continue;
    ++shared;
    const double a = u(rng), b = u(rng) * (1 - a);
    const double w[3] = {a, b, 1 - a - b};
    Vec3 q = Vec3::Zero();
    RowVector expect = RowVector::Zero(2);
    for (int i = 0; i < 3; ++i) {
      q += w[i] * m.nodes.row(f[static_cast<std::size_t>(i)]).transpose();
      expect += w[i] * m.values[0].row(f[static_cast<std::size_t>(i)]);
    }
    for (int e : ts) {
      Eigen::Matrix4d A;
      Eigen::Matrix<double, 4, 2> V;
      for (int i = 0; i < 4; ++i) {
        const int n = m.tets[static_cast<std::size_t>(e)][static_cast<std::size_t>(i)];
        A.col(i).head<3>() = m.nodes.row(n).transpose();
        A(3, i) = 1.0;
        V.row(i) = m.values[0].row(n);
      }
      Eigen::Vector4d lam = A.fullPivLu().solve(Eigen::Vector4d(q(0), q(1), q(2), 1.0));
      RowVector val = lam.transpose() * V;
      CHECK((val - expect).cwiseAbs().maxCoeff() < 1e-12);
    }
    auto v = barycentric_interpolate(m, loc, m.values[0], q);
    REQUIRE(v);
    CHECK(((*v) - expect).cwiseAbs().maxCoeff() < 1e-12);
  }
  CHECK(shared > 0);
}

TEST_CASE("tet mesh file round trip and dataset") {
  TetMesh m = box_mesh(2, 3, 2, 8);
  auto back = parse_tetmesh(encode_tetmesh(m));
  CHECK(back.nodes == m.nodes);
  CHECK(back.tets == m.tets);
  REQUIRE(back.timesteps() == 3);
  for (int t = 0; t < 3; ++t) CHECK(back.values[static_cast<std::size_t>(t)] == m.values[static_cast<std::size_t>(t)]);

  auto ds = tetmesh_to_dataset(m, {"p", "v"});
  CHECK(ds.size() == 3 * m.node_count());
  CHECK(ds.in_dim() == 4);
  CHECK(ds.time_column == 3);
  CHECK(ds.coords(m.node_count() + 2, 3) == 1.0);
  CHECK(ds.values(2 * m.node_count() + 5, 1) == m.values[2](5, 1));
  CHECK(ds.mesh != nullptr);

  TetMesh s = box_mesh(2, 1, 1, 9);
  CHECK(tetmesh_to_dataset(s).in_dim() == 3);

  std::string bytes = encode_tetmesh(m);
  bytes[bytes.size() / 2] ^= 0x40;
  CHECK_THROWS_AS(parse_tetmesh(bytes), ParseError);
  CHECK_THROWS_AS(parse_tetmesh(std::string_view(bytes).substr(0, 40)), ParseError);
}

TEST_CASE("loaders never crash on fuzzed input") {
  PointTable t;
  t.names = {"x", "y", "p"};
  t.data = Matrix::Random(6, 3);
  GreyImage img;
  img.width = 3;
  img.height = 2;
  img.pixels = {0, 0.2, 0.4, 0.6, 0.8, 1};
  const std::vector<std::string> seeds = {encode_point_table(t, TableFormat::Text),
                                          encode_point_table(t, TableFormat::Binary), encode_pgm(img, 255, true),
                                          encode_pgm(img, 65535, false), encode_tetmesh(box_mesh(1, 1, 1, 2))};
  std::mt19937_64 rng(10);
  int rejected = 0, total = 0;
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    for (int trial = 0; trial < 400; ++trial) {
      std::string b = seeds[s];
      std::uniform_int_distribution<int> op(0, 2);
      const int o = op(rng);
      std::uniform_int_distribution<std::size_t> pos(0, b.size() - 1);
      if (o == 0) {
        b[pos(rng)] = static_cast<char>(rng());
      } else if (o == 1) {
        b.resize(pos(rng));
      } else {
        b.insert(pos(rng), 1, static_cast<char>(rng()));
      }
      ++total;
      try {
        if (s < 2) parse_point_table(b);
        else if (s < 4) parse_pgm(b);
        else parse_tetmesh(b);
      } catch (const Error&) {
        ++rejected;
      }
    }
  }
  CHECK(rejected > total / 4);
}
