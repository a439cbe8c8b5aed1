#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <iostream>
#include <json.hpp>
#include <mutex>
#include <thread>

#include "nrf/binio.hpp"
#include "nrf/cli.hpp"
#include "nrf/error.hpp"
#include "nrf/parallel.hpp"
#include "nrf/pgm.hpp"
#include "nrf/point_field.hpp"
#include "nrf/tet_mesh.hpp"

namespace nrf::cli {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string lower_ext(const fs::path& p) {
  std::string e = p.extension().string();
  for (auto& c : e) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return e;
}

std::string resolve_kind(const RunConfig& cfg) {
  if (cfg.data.kind != "auto") return cfg.data.kind;
  if (cfg.data.path.empty()) return cfg.sdf.mesh.empty() ? "points" : "sdf";
  const std::string e = lower_ext(cfg.data.path);
  if (e == ".pgm") return "image";
  if (e == ".nrftet" || e == ".tet") return "tetmesh";
  return "points";
}

Matrix predict_parallel(const model::Model& m, const Matrix& X, int jobs) {
  Matrix out(X.rows(), m.config().out_dim);
  parallel_for(X.rows(), jobs, [&](Index b, Index e) { out.middleRows(b, e - b) = m.predict(X.middleRows(b, e - b)); });
  return out;
}

std::vector<int> component_indices(const data::FieldDataset& ds, const std::vector<std::string>& names,
                                   const std::string& key) {
  std::vector<int> out;
  for (const auto& n : names) {
    int k = ds.value_index(n);
    if (k < 0) {
      char* end = nullptr;
      const long v = std::strtol(n.c_str(), &end, 10);
      if (end && *end == '\0' && !n.empty() && v >= 0 && v < ds.out_dim()) k = static_cast<int>(v);
    }
    if (k < 0) throw ConfigError(key, "no output component named '" + n + "'");
    out.push_back(k);
  }
  return out;
}

std::uint64_t resolve_seed(const RunConfig& cfg, const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (cfg.seed) return *cfg.seed;
  if (const char* env = std::getenv("NRF_SEED"); env && *env) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (!end || *end != '\0') throw ConfigError("NRF_SEED", "not an unsigned integer: '" + std::string(env) + "'");
    return v;
  }
  return 0;
}

json metadata_json(const RunConfig& cfg, const LoadedData& ld, std::uint64_t seed, const std::string& kind) {
  json j;
  j["name"] = cfg.name;
  j["seed"] = seed;
  j["data"] = {{"kind", kind}, {"path", cfg.data.path.string()}, {"values", cfg.data.values}};
  j["coord_names"] = ld.dataset.coord_names;
  j["value_names"] = ld.dataset.value_names;
  j["eval"] = {{"norm_components", cfg.eval.norm_components}, {"bins", cfg.eval.bins}};
  j["train"] = {{"iterations", cfg.train.iterations},
                {"batch_size", cfg.train.batch_size},
                {"lr", cfg.train.lr},
                {"components", cfg.components}};
  if (kind == "sdf") {
    j["sdf"] = {{"mesh", cfg.sdf.mesh.string()},
                {"scenario", std::string(sdf::to_string(cfg.sdf.scenario))},
                {"size", std::string(sdf::to_string(cfg.sdf.size))},
                {"delta", cfg.sdf.delta},
                {"grid", cfg.sdf.grid}};
    if (ld.transform)
      j["sdf"]["transform"] = {{"scale", ld.transform->scale},
                               {"center", {ld.transform->center(0), ld.transform->center(1), ld.transform->center(2)}}};
  }
  return j;
}

json model_metadata(const model::Model& m) {
  if (m.metadata.empty()) return json::object();
  try {
    return json::parse(m.metadata);
  } catch (const json::exception&) {
    return json::object();
  }
}

void raw_dims(const LoadedData& ld, std::uint64_t& nodes, std::uint64_t& steps) {
  if (ld.mesh) {
    nodes = static_cast<std::uint64_t>(ld.mesh->node_count());
    steps = static_cast<std::uint64_t>(ld.mesh->timesteps());
  } else {
    nodes = static_cast<std::uint64_t>(ld.dataset.size());
    steps = 1;
  }
}

void write_report(const fs::path& dir, const metrics::EvalReport& r) {
  io::write_file(dir / "report.txt", r.to_text());
  io::write_file(dir / "report.tsv", r.to_tsv());
}

void write_errors(const fs::path& file, const model::Model& m, const data::FieldDataset& ds, int jobs) {
  const Matrix err = predict_parallel(m, ds.coords, jobs) - ds.values;
  data::PointTable t;
  t.names = ds.coord_names;
  for (const auto& n : ds.value_names) t.names.push_back("err_" + n);
  t.data.resize(ds.size(), static_cast<Index>(t.names.size()));
  t.data << ds.coords, err;
  data::save_point_table(file, t, data::format_for_path(file));
}

void write_profile(const fs::path& file, const model::Model& m, const data::FieldDataset& ds, const EvalConfig& ev,
                   const data::TetMesh* mesh) {
  if (ev.profile.cols() != ds.in_dim())
    throw ConfigError("eval.profile", "points need " + std::to_string(ds.in_dim()) + " coordinates");
  const Matrix s = metrics::sample_polyline(ev.profile, ev.profile_samples);
  const Matrix X = s.rightCols(s.cols() - 1);
  const Matrix pred = m.predict(X);
  data::PointTable t;
  t.names.push_back("s");
  for (const auto& n : ds.coord_names) t.names.push_back(n);
  for (const auto& n : ds.value_names) t.names.push_back(n);
  const bool truth = mesh && (ds.in_dim() == 3 || ds.in_dim() == 4);
  if (truth)
    for (const auto& n : ds.value_names) t.names.push_back("truth_" + n);
  t.data = Matrix::Constant(s.rows(), static_cast<Index>(t.names.size()), std::numeric_limits<double>::quiet_NaN());
  t.data.leftCols(s.cols()) = s;
  t.data.middleCols(s.cols(), pred.cols()) = pred;
  if (truth) {
    data::TetLocator loc(*mesh);
    for (Index r = 0; r < X.rows(); ++r) {
      const int step = ds.in_dim() == 4 ? static_cast<int>(std::lround(X(r, 3))) : 0;
      if (step < 0 || step >= mesh->timesteps()) continue;
      auto v = data::barycentric_interpolate(*mesh, loc, mesh->values[static_cast<std::size_t>(step)],
                                             X.row(r).head(3).transpose());
      if (v) t.data.block(r, s.cols() + pred.cols(), 1, pred.cols()) = *v;
    }
  }
  data::save_point_table(file, t, data::TableFormat::Text);
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + v[i];
  return s;
}

// ---- commands ----

struct TrainFlags {
  std::vector<std::string> configs;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> iterations, layers, width, log_every;
  std::optional<Index> batch_size;
  std::optional<double> lr;
  std::optional<std::string> architecture;
  int jobs = 1;
};

void train_one(RunConfig cfg, const TrainFlags& f, const fs::path& out, int jobs, bool print) {
  if (f.iterations) cfg.train.iterations = *f.iterations;
  if (f.batch_size) cfg.train.batch_size = *f.batch_size;
  if (f.lr) cfg.train.lr = *f.lr;
  if (f.log_every) cfg.train.log_every = *f.log_every;
  if (f.layers) cfg.model.layers = *f.layers;
  if (f.width) cfg.model.width = *f.width;
  if (f.architecture) {
    std::string a = *f.architecture;
    for (auto& c : a) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    cfg.model.architecture = model::parse_architecture(a);
  }
  const std::uint64_t seed = resolve_seed(cfg, f.seed);
  const std::string kind = resolve_kind(cfg);
  if (cfg.eval.grid > 0 && cfg.eval.mesh.empty() && kind != "tetmesh")
    throw ConfigError("eval.mesh", "grid validation needs a tetrahedral mesh");

  LoadedData ld = load_data(cfg, seed, jobs);
  const auto& ds = ld.dataset;
  model::ModelConfig mc = cfg.model;
  mc.in_dim = ds.in_dim();
  mc.out_dim = ds.out_dim();
  mc.seed = seed;
  if (mc.time_column < 0 && ds.time_column >= 0) mc.time_column = ds.time_column;

  train::TrainConfig tc = cfg.train;
  tc.seed = seed;
  tc.component_mask = component_indices(ds, cfg.components, "train.components");
  fs::create_directories(out);
  tc.abort_checkpoint = out / "abort.nrfc";

  model::Model m(mc);
  m.metadata = metadata_json(cfg, ld, seed, kind).dump();
  spdlog::info("{}: training {} ({} parameters) on {} records", cfg.name, model::to_string(mc.architecture),
               m.parameter_count(), ds.size());
  if (tc.log_every == 0 && print) tc.log_every = std::max(1, tc.iterations / 10);
  const auto trace = train::train(m, ds, tc);

  model::checkpoint_save(m, out / "model.nrfc");
  train::save_trace(out / "loss.txt", trace);
  train::save_trace(out / "loss_smoothed.txt", {train::smooth_trace(trace.mse, tc.smooth_window)});

  std::optional<data::TetMesh> grid_mesh;
  if (cfg.eval.grid > 0) grid_mesh = cfg.eval.mesh.empty() ? *ld.mesh : data::load_tetmesh(cfg.eval.mesh);
  std::uint64_t nodes, steps;
  raw_dims(ld, nodes, steps);
  auto report = evaluate(m, ds, cfg.eval, grid_mesh ? &*grid_mesh : nullptr, nodes, steps, jobs);
  write_report(out, report);
  if (cfg.eval.profile.rows() > 0)
    write_profile(out / "profile.tsv", m, ds, cfg.eval, ld.mesh ? &*ld.mesh : (grid_mesh ? &*grid_mesh : nullptr));
  if (print) std::cout << report.to_text() << std::flush;
}

int cmd_train(const TrainFlags& f) {
  std::vector<RunConfig> cfgs;
  for (const auto& c : f.configs) cfgs.push_back(load_run_config(c));
  auto out_for = [&](const RunConfig& c) {
    fs::path base = !f.out.empty() ? fs::path(f.out) : (!c.out.empty() ? c.out : fs::path("runs"));
    return cfgs.size() > 1 || f.out.empty() ? base / c.name : base;
  };
  if (cfgs.size() == 1) {
    train_one(cfgs[0], f, out_for(cfgs[0]), f.jobs, true);
    return kOk;
  }
  // Independent runs spread over the worker threads, one thread each.
  std::vector<int> codes(cfgs.size(), kOk);
  std::atomic<std::size_t> next{0};
  std::mutex log_mu;
  auto worker = [&] {
    for (std::size_t i; (i = next++) < cfgs.size();) {
      try {
        train_one(cfgs[i], f, out_for(cfgs[i]), 1, false);
      } catch (const std::exception& e) {
        std::lock_guard lock(log_mu);
        spdlog::error("{}: {}", cfgs[i].name, e.what());
        codes[i] = exit_code_for(e);
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < std::max(1, std::min<int>(f.jobs, static_cast<int>(cfgs.size()))); ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (std::size_t i = 0; i < cfgs.size(); ++i)
    std::cout << cfgs[i].name << " = " << (codes[i] == kOk ? "ok" : "failed") << " (" << out_for(cfgs[i]).string()
              << ")\n";
  for (int c : codes)
    if (c != kOk) return c;
  return kOk;
}

struct EvalFlags {
  std::string checkpoint, data, config, mesh, out;
  std::vector<std::string> values;
  int grid = 0;
  bool node_coincident = false;
  std::vector<int> steps;
  int jobs = 1;
};

int cmd_eval(const EvalFlags& f) {
  if (f.grid > 0 && f.mesh.empty()) throw UsageError("--grid needs --mesh");
  if (f.grid == 1 || f.grid < 0) throw UsageError("--grid must be at least 2");
  model::Model m = model::checkpoint_load(f.checkpoint);
  const json meta = model_metadata(m);

  RunConfig cfg;
  if (!f.config.empty()) {
    cfg = load_run_config(f.config);
  } else if (meta.contains("data")) {
    cfg.data.kind = meta["data"].value("kind", std::string("auto"));
    cfg.data.path = meta["data"].value("path", std::string());
    cfg.data.values = meta["data"].value("values", std::vector<std::string>{});
    if (meta.contains("eval")) {
      cfg.eval.norm_components = meta["eval"].value("norm_components", std::vector<std::string>{});
      cfg.eval.bins = meta["eval"].value("bins", 20);
    }
    if (meta.contains("sdf")) cfg.sdf.mesh = meta["sdf"].value("mesh", std::string());
  }
  if (!f.data.empty()) {
    cfg.data.path = f.data;
    cfg.data.kind = "auto";
    if (resolve_kind(cfg) == "points" && !cfg.sdf.mesh.empty() && meta.contains("sdf")) cfg.data.kind = "sdf";
  }
  if (!f.values.empty()) cfg.data.values = f.values;
  if (cfg.data.path.empty() && resolve_kind(cfg) != "sdf") throw UsageError("no dataset: pass --data or --config");
  cfg.eval.grid = f.grid;
  cfg.eval.node_coincident = f.node_coincident;
  cfg.eval.steps = f.steps;

  const std::uint64_t seed = meta.contains("seed") ? meta["seed"].get<std::uint64_t>() : resolve_seed(cfg, {});
  LoadedData ld = load_data(cfg, seed, f.jobs);
  std::optional<data::TetMesh> grid_mesh;
  if (f.grid > 0) grid_mesh = data::load_tetmesh(f.mesh);
  std::uint64_t nodes, steps;
  raw_dims(ld, nodes, steps);
  auto report = evaluate(m, ld.dataset, cfg.eval, grid_mesh ? &*grid_mesh : nullptr, nodes, steps, f.jobs);
  if (!f.out.empty()) {
    fs::create_directories(f.out);
    write_report(f.out, report);
    write_errors(fs::path(f.out) / "errors.tsv", m, ld.dataset, f.jobs);
    if (cfg.eval.profile.rows() > 0) write_profile(fs::path(f.out) / "profile.tsv", m, ld.dataset, cfg.eval,
                                                   ld.mesh ? &*ld.mesh : (grid_mesh ? &*grid_mesh : nullptr));
  }
  std::cout << report.to_text() << std::flush;
  return kOk;
}

struct SampleFlags {
  std::string mesh, scenario = "MSS", size = "small", out;
  double delta = 1024.0;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
};

int cmd_sdf_sample(const SampleFlags& f) {
  const auto scen = sdf::parse_scenario(f.scenario);
  const auto size = sdf::parse_sample_size(f.size);
  if (!(f.delta > 0.0)) throw UsageError("--delta must be positive");
  RunConfig none;
  const std::uint64_t seed = resolve_seed(none, f.seed);
  auto [unit, tf] = sdf::rescale_to_unit_cube(sdf::load_trimesh(f.mesh));
  if (!unit.watertight()) spdlog::warn("{} is not watertight; inside/outside signs may be unreliable", f.mesh);
  const auto set = sdf::sample_sdf_training_set(unit, scen, size, f.delta, seed, f.jobs);
  data::save_point_table(f.out, set.to_table(), data::format_for_path(f.out));
  metrics::EvalReport r;
  r.add("scenario", set.scenario);
  r.add("uniform", static_cast<double>(set.counts.uniform));
  r.add("surface", static_cast<double>(set.counts.surface));
  r.add("perturbed", static_cast<double>(set.counts.perturbed));
  r.add("total", static_cast<double>(set.counts.total()));
  r.add("delta", set.delta);
  r.add("sigma", sdf::perturbation_sigma(set.delta));
  r.add("seed", std::to_string(seed));
  r.add("scale", tf.scale);
  r.add("center", metrics::format_number(tf.center(0)) + " " + metrics::format_number(tf.center(1)) + " " +
                      metrics::format_number(tf.center(2)));
  std::cout << r.to_text() << std::flush;
  return kOk;
}

struct ReconstructFlags {
  std::string checkpoint, mesh, out;
  std::optional<int> grid;
  int bins = 20;
  int jobs = 1;
};

int cmd_reconstruct(const ReconstructFlags& f) {
  model::Model m = model::checkpoint_load(f.checkpoint);
  if (m.config().out_dim != 1 || m.config().in_dim != 3)
    throw UsageError("reconstruct needs an SDF model (3 inputs, 1 output); this one maps " +
                     std::to_string(m.config().in_dim) + " -> " + std::to_string(m.config().out_dim));
  const json meta = model_metadata(m);
  std::string mesh_path = f.mesh;
  int grid = f.grid.value_or(100);
  if (meta.contains("sdf")) {
    if (mesh_path.empty()) mesh_path = meta["sdf"].value("mesh", std::string());
    if (!f.grid) grid = meta["sdf"].value("grid", 100);
  }
  if (grid < 2) throw UsageError("--grid must be at least 2");
  if (mesh_path.empty()) throw UsageError("no reference mesh: pass --mesh");
  auto [unit, tf] = sdf::rescale_to_unit_cube(sdf::load_trimesh(mesh_path));

  const auto fn = [&](const Matrix& P) { return m.predict(P); };
  const auto cs = sdf::extract_zero_crossings(fn, grid, &unit, f.jobs);

  metrics::EvalReport r;
  r.add("grid", static_cast<double>(grid));
  r.add("crossings", static_cast<double>(cs.points.rows()));
  r.add("scale", tf.scale);
  std::optional<sdf::DistanceStats> st;
  if (!cs.distance.empty()) {
    st = sdf::distance_error_stats(cs.distance, tf, f.bins);
    r.add("mean_abs_distance", st->mean_abs);
    r.add("max_abs_distance", st->max_abs);
    r.add("mean_abs_distance_physical", st->mean_abs_physical);
    r.add("max_abs_distance_physical", st->max_abs_physical);
  }
  if (!f.out.empty()) {
    fs::create_directories(f.out);
    data::PointTable t;
    t.names = {"x", "y", "z", "d", "px", "py", "pz", "d_physical"};
    t.data.resize(cs.points.rows(), 8);
    for (Index i = 0; i < cs.points.rows(); ++i) {
      const Vec3 u = cs.points.row(i).transpose();
      const double d = cs.distance[static_cast<std::size_t>(i)];
      t.data.row(i) << u.transpose(), d, tf.inverse(u).transpose(), tf.to_physical_length(d);
    }
    data::save_point_table(fs::path(f.out) / "crossings.tsv", t, data::TableFormat::Text);
    write_report(f.out, r);
    if (st) {
      std::string h = "lo\thi\tcount\n";
      for (std::size_t b = 0; b < st->histogram.counts.size(); ++b)
        h += metrics::format_number(st->histogram.edges[b]) + "\t" + metrics::format_number(st->histogram.edges[b + 1]) +
             "\t" + std::to_string(st->histogram.counts[b]) + "\n";
      io::write_file(fs::path(f.out) / "histogram.tsv", h);
    }
  }
  std::cout << r.to_text() << std::flush;
  return kOk;
}

int cmd_info(const std::string& checkpoint) {
  const model::Model m = model::checkpoint_load(checkpoint);
  const auto& c = m.config();
  const auto sz = model::checkpoint_size(m);
  const json meta = model_metadata(m);
  metrics::EvalReport r;
  r.add("architecture", std::string(model::to_string(c.architecture)));
  r.add("network", std::to_string(c.layers) + (model::is_mfn(c.architecture) ? " filters × " : " layers × ") +
                       std::to_string(c.width));
  r.add("activation", std::string(model::to_string(model::effective_activation(c))));
  const auto e = model::effective_encoding(c);
  r.add("encoding", std::string(enc::to_string(e.kind)));
  if (e.kind == enc::EncodingKind::GaussianPe || e.kind == enc::EncodingKind::FixedPe2L ||
      e.kind == enc::EncodingKind::Group) {
    r.add("encoding.frequencies", static_cast<double>(e.frequencies));
    const bool gaussian = e.kind == enc::EncodingKind::GaussianPe ||
                          std::count(e.rules.begin(), e.rules.end(), enc::GroupRule::GaussianPe) > 0;
    if (gaussian) r.add("encoding.bandwidth", e.bandwidth);
  }
  if (e.kind == enc::EncodingKind::Group) {
    std::vector<std::string> rules;
    for (auto g : e.rules) rules.emplace_back(enc::to_string(g));
    r.add("encoding.rules", join(rules));
  }
  if (e.kind == enc::EncodingKind::HashGrid) {
    r.add("hash.levels", static_cast<double>(e.hash.levels));
    r.add("hash.features", static_cast<double>(e.hash.features));
    r.add("hash.log2_table_size", static_cast<double>(e.hash.log2_table_size));
    r.add("hash.min_resolution", static_cast<double>(e.hash.min_resolution));
    r.add("hash.max_resolution", static_cast<double>(e.hash.max_resolution));
  }
  if (c.architecture == model::Architecture::Siren) r.add("omega0", c.omega0);
  if (model::is_mfn(c.architecture)) r.add("mfn.input_scale", c.mfn.input_scale);
  r.add("seed", std::to_string(c.seed));
  if (meta.contains("train")) {
    const json& t = meta["train"];
    r.add("train.iterations", t.value("iterations", 0.0));
    r.add("train.batch_size", t.value("batch_size", 0.0));
    r.add("train.lr", t.value("lr", 0.0));
  }
  if (meta.contains("sdf")) {
    const json& sd = meta["sdf"];
    r.add("sdf.scenario", sd.value("scenario", std::string()));
    r.add("sdf.size", sd.value("size", std::string()));
    r.add("sdf.delta", sd.value("delta", 0.0));
  }
  std::vector<std::string> in_names, out_names;
  if (meta.contains("coord_names")) in_names = meta["coord_names"].get<std::vector<std::string>>();
  if (meta.contains("value_names")) out_names = meta["value_names"].get<std::vector<std::string>>();
  r.add("inputs", std::to_string(c.in_dim) + (in_names.empty() ? "" : " (" + join(in_names) + ")"));
  r.add("outputs", std::to_string(c.out_dim) + (out_names.empty() ? "" : " (" + join(out_names) + ")"));
  r.add("parameter_count", static_cast<double>(m.parameter_count()));
  r.add("stored_reals", static_cast<double>(sz.stored_reals));
  r.add("checkpoint_bytes", static_cast<double>(sz.file_bytes));
  r.add("eq32_bytes", static_cast<double>(sz.eq32_bytes));
  const auto& n = m.normalization();
  for (int i = 0; i < n.in_dim(); ++i) {
    const std::string name = static_cast<std::size_t>(i) < in_names.size() ? in_names[static_cast<std::size_t>(i)] : std::to_string(i);
    r.add("input." + name + ".range",
          metrics::format_number(n.in_lo(i)) + " " + metrics::format_number(n.in_hi(i)));
  }
  for (int i = 0; i < n.out_dim(); ++i) {
    const std::string name = static_cast<std::size_t>(i) < out_names.size() ? out_names[static_cast<std::size_t>(i)] : std::to_string(i);
    r.add("output." + name + ".shift_scale",
          metrics::format_number(n.out_shift(i)) + " " + metrics::format_number(n.out_scale(i)));
  }
  std::cout << r.to_text() << std::flush;
  return kOk;
}

void setup_logging(bool quiet, bool verbose) {
  auto logger = spdlog::get("nrf");
  if (!logger) logger = spdlog::stderr_color_mt("nrf");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(quiet ? spdlog::level::warn : verbose ? spdlog::level::debug : spdlog::level::info);
}

}  // namespace

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e)) return kUsage;
  if (dynamic_cast<const ConfigError*>(&e)) return kConfig;
  if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const ShapeError*>(&e)) return kData;
  if (dynamic_cast<const NumericError*>(&e)) return kNumeric;
  if (dynamic_cast<const CorruptFileError*>(&e)) return kCorrupt;
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return kData;
  return kUsage;
}

LoadedData load_data(const RunConfig& cfg, std::uint64_t seed, int jobs) {
  LoadedData ld;
  const std::string kind = resolve_kind(cfg);
  if (kind != "sdf" && cfg.data.path.empty()) throw ConfigError("data.path", "no dataset given");
  if (kind == "image") {
    ld.dataset = data::image_to_dataset(data::load_pgm(cfg.data.path));
  } else if (kind == "points") {
    ld.dataset = data::load_point_field(cfg.data.path, cfg.data.values);
  } else if (kind == "tetmesh") {
    ld.mesh = data::load_tetmesh(cfg.data.path);
    ld.dataset = data::tetmesh_to_dataset(*ld.mesh, cfg.data.values);
  } else {
    if (cfg.sdf.mesh.empty()) throw ConfigError("sdf.mesh", "SDF data needs the reference surface mesh");
    auto [unit, tf] = sdf::rescale_to_unit_cube(sdf::load_trimesh(cfg.sdf.mesh));
    ld.transform = tf;
    if (!cfg.data.path.empty()) {
      ld.dataset = data::table_to_dataset(data::load_point_table(cfg.data.path), {"d"});
    } else {
      if (!unit.watertight()) spdlog::warn("{} is not watertight; inside/outside signs may be unreliable", cfg.sdf.mesh.string());
      const auto set = sdf::sample_sdf_training_set(unit, cfg.sdf.scenario, cfg.sdf.size, cfg.sdf.delta, seed, jobs);
      ld.dataset = data::table_to_dataset(set.to_table(), {"d"});
    }
    if (ld.dataset.in_dim() != 3) throw DataError("SDF samples need x, y, z columns");
    ld.dataset.lo = ld.dataset.lo.cwiseMin(RowVector::Zero(3));
    ld.dataset.hi = ld.dataset.hi.cwiseMax(RowVector::Ones(3));
  }
  ld.dataset.validate();
  return ld;
}

metrics::EvalReport evaluate(const model::Model& m, const data::FieldDataset& ds, const EvalConfig& ev,
                             const data::TetMesh* grid_mesh, std::uint64_t raw_nodes, std::uint64_t raw_steps,
                             int jobs) {
  if (ds.in_dim() != m.config().in_dim || ds.out_dim() != m.config().out_dim)
    throw ShapeError("dataset maps " + std::to_string(ds.in_dim()) + " -> " + std::to_string(ds.out_dim()) +
                     " but the model maps " + std::to_string(m.config().in_dim) + " -> " +
                     std::to_string(m.config().out_dim));
  const Matrix pred = predict_parallel(m, ds.coords, jobs);
  metrics::EvalReport r;
  r.add("architecture", std::string(model::to_string(m.config().architecture)));
  r.add("records", static_cast<double>(ds.size()));
  const RowVector e = metrics::rmse(pred, ds.values);
  for (Index c = 0; c < e.size(); ++c) r.add("rmse." + ds.value_names[static_cast<std::size_t>(c)], e(c));
  if (!ev.norm_components.empty())
    r.add("rmse.norm", metrics::norm_rmse(pred, ds.values, component_indices(ds, ev.norm_components, "eval.norm_components")));
  if (ds.values.cwiseAbs().maxCoeff() > 0.0) {
    const auto s = metrics::snr_psnr(pred, ds.values);
    r.add("snr_db", s.snr_db);
    r.add("psnr_db", s.psnr_db);
  }
  const auto comp = metrics::compression_report(m, raw_nodes, static_cast<std::uint64_t>(ds.out_dim()), raw_steps);
  r.add("parameter_count", static_cast<double>(comp.parameter_count));
  r.add("raw_bytes", static_cast<double>(comp.raw_bytes));
  r.add("checkpoint_bytes", static_cast<double>(comp.checkpoint_bytes));
  r.add("eq32_bytes", static_cast<double>(comp.eq32_bytes));
  r.add("compression_ratio", comp.ratio);
  if (grid_mesh && ev.grid > 0) {
    metrics::GridOptions go;
    go.n = ev.grid;
    go.node_coincident = ev.node_coincident;
    go.steps = ev.steps;
    const auto g = metrics::grid_validation(m, *grid_mesh, go, jobs);
    r.add("grid.n", static_cast<double>(ev.grid));
    r.add("grid.points_total", static_cast<double>(g.points_total));
    r.add("grid.points_inside", static_cast<double>(g.points_inside));
    for (Index c = 0; c < g.rmse.size(); ++c) r.add("grid.rmse." + ds.value_names[static_cast<std::size_t>(c)], g.rmse(c));
  }
  return r;
}

int run(int argc, char** argv) {
  CLI::App app{"Neural representations of simulation fields"};
  app.require_subcommand(1);
  app.fallthrough();
  bool quiet = false, verbose = false;
  int jobs = 1;
  app.add_flag("-q,--quiet", quiet, "Only warnings and errors on stderr");
  app.add_flag("-v,--verbose", verbose, "Debug logging");
  app.add_option("-j,--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);

  TrainFlags tf;
  auto* train = app.add_subcommand("train", "Train a network from one or more run configs");
  train->add_option("configs", tf.configs, "YAML run configs")->required()->check(CLI::ExistingFile);
  train->add_option("--seed", tf.seed, "Top-level seed (default: config, then NRF_SEED)");
  train->add_option("-o,--out", tf.out, "Output directory");
  train->add_option("--iterations", tf.iterations);
  train->add_option("--batch-size", tf.batch_size);
  train->add_option("--lr", tf.lr);
  train->add_option("--architecture", tf.architecture);
  train->add_option("--layers", tf.layers);
  train->add_option("--width", tf.width);
  train->add_option("--log-every", tf.log_every);

  EvalFlags ef;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint against its dataset");
  eval->add_option("checkpoint", ef.checkpoint)->required();
  eval->add_option("--data", ef.data, "Dataset (default: the one recorded at training)");
  eval->add_option("--values", ef.values, "Value columns of a point table");
  eval->add_option("--config", ef.config, "Run config supplying data and eval settings");
  eval->add_option("--grid", ef.grid, "Regular validation grid points per axis");
  eval->add_option("--mesh", ef.mesh, "Tetrahedral mesh with nodal truth for the grid");
  eval->add_flag("--node-coincident", ef.node_coincident, "Grid i/(n-1) instead of cell centers");
  eval->add_option("--steps", ef.steps, "Time steps for the grid (default: all)");
  eval->add_option("-o,--out", ef.out, "Write report, error field and profile here");

  SampleFlags sf;
  auto* sample = app.add_subcommand("sdf-sample", "Generate an SDF training set from a surface mesh");
  sample->add_option("mesh", sf.mesh)->required();
  sample->add_option("--scenario", sf.scenario)
      ->transform(CLI::IsMember({"MSS", "SMS", "SSM"}, CLI::ignore_case))
      ->capture_default_str();
  sample->add_option("--size", sf.size)->transform(CLI::IsMember({"large", "small"}, CLI::ignore_case))->capture_default_str();
  sample->add_option("--delta", sf.delta, "Perturbation parameter; sigma = 0.5 / delta")->capture_default_str();
  sample->add_option("--seed", sf.seed);
  sample->add_option("-o,--out", sf.out, "Sample table (binary unless .txt/.tsv/.dat)")->required();

  ReconstructFlags rf;
  auto* recon = app.add_subcommand("reconstruct", "Extract the zero level set of an SDF network");
  recon->add_option("checkpoint", rf.checkpoint)->required();
  recon->add_option("--grid", rf.grid, "Lattice points per axis (default: training config, else 100)");
  recon->add_option("--mesh", rf.mesh, "Reference surface (default: the one recorded at training)");
  recon->add_option("--bins", rf.bins)->check(CLI::PositiveNumber);
  recon->add_option("-o,--out", rf.out, "Write crossings, report and histogram here");

  std::string info_ckpt;
  auto* info = app.add_subcommand("info", "Summarize a checkpoint");
  info->add_option("checkpoint", info_ckpt)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }
  setup_logging(quiet, verbose);
  set_default_jobs(jobs);
  tf.jobs = ef.jobs = sf.jobs = rf.jobs = jobs;
  try {
    if (*train) return cmd_train(tf);
    if (*eval) return cmd_eval(ef);
    if (*sample) return cmd_sdf_sample(sf);
    if (*recon) return cmd_reconstruct(rf);
    if (*info) return cmd_info(info_ckpt);
  } catch (const std::exception& e) {
    const int rc = exit_code_for(e);
    spdlog::error("{}", e.what());
    return rc;
  }
  return kUsage;
}

}  // namespace nrf::cli
