#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nrf/metrics.hpp"
#include "nrf/model.hpp"
#include "nrf/sdf.hpp"
#include "nrf/train.hpp"

namespace nrf::cli {

inline constexpr int kSchemaVersion = 1;

// Process exit codes.
enum ExitCode : int { kOk = 0, kUsage = 1, kConfig = 2, kData = 3, kNumeric = 4, kCorrupt = 5 };
int exit_code_for(const std::exception& e);

struct DataConfig {
  std::string kind = "auto";  // auto | image | points | tetmesh | sdf
  std::filesystem::path path;
  std::vector<std::string> values;  // value columns (points) or component names (tetmesh)
};

struct EvalConfig {
  int grid = 0;  // 0 disables grid validation
  bool node_coincident = false;
  std::filesystem::path mesh;
  std::vector<int> steps;
  Matrix profile;  // polyline vertices, one row per vertex
  int profile_samples = 100;
  std::vector<std::string> norm_components;
  int bins = 20;
};

struct SdfConfig {
  std::filesystem::path mesh;
  sdf::Scenario scenario = sdf::Scenario::MSS;
  sdf::SampleSize size = sdf::SampleSize::Small;
  double delta = 1024.0;
  int grid = 100;
};

struct RunConfig {
  int schema = kSchemaVersion;
  std::string name;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out;
  DataConfig data;
  model::ModelConfig model;
  train::TrainConfig train;
  std::vector<std::string> components;  // names or indices of trained outputs
  EvalConfig eval;
  SdfConfig sdf;
};

// YAML document with sections data, model, encoding, train, eval, sdf.
// Unknown keys throw ConfigError naming the dotted key path. Relative paths
// resolve against base_dir.
RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

// Everything a run needs besides the model.
struct LoadedData {
  data::FieldDataset dataset;
  std::optional<data::TetMesh> mesh;
  std::optional<sdf::UnitCubeTransform> transform;
};
LoadedData load_data(const RunConfig& cfg, std::uint64_t seed, int jobs);

// Nodal RMSE/SNR/PSNR and compression accounting, plus grid validation when
// a mesh is given.
metrics::EvalReport evaluate(const model::Model& m, const data::FieldDataset& ds, const EvalConfig& eval,
                             const data::TetMesh* grid_mesh, std::uint64_t raw_nodes, std::uint64_t raw_steps,
                             int jobs);

// Entry point of the nrf executable.
int run(int argc, char** argv);

}  // namespace nrf::cli
