#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cctype>
#include <set>

#include "nrf/binio.hpp"
#include "nrf/cli.hpp"
#include "nrf/error.hpp"

namespace nrf::cli {
namespace {

// Reads known keys of one mapping and rejects the rest.
class Section {
 public:
  Section(YAML::Node node, std::string path) : node_(std::move(node)), path_(std::move(path)) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) throw ConfigError(path_, "expected a mapping");
  }

  std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

  YAML::Node raw(const std::string& k) {
    used_.insert(k);
    if (!node_ || node_.IsNull()) return YAML::Node();
    return node_[k];
  }

  template <class T>
  bool get(const std::string& k, T& out) {
    YAML::Node v = raw(k);
    if (!v || v.IsNull()) return false;
    out = convert<T>(v, key(k));
    return true;
  }

  bool get_path(const std::string& k, std::filesystem::path& out, const std::filesystem::path& base) {
    std::string s;
    if (!get(k, s)) return false;
    std::filesystem::path p(s);
    out = p.is_relative() && !base.empty() ? base / p : p;
    return true;
  }

  template <class T>
  bool get_list(const std::string& k, std::vector<T>& out) {
    YAML::Node v = raw(k);
    if (!v || v.IsNull()) return false;
    if (!v.IsSequence()) throw ConfigError(key(k), "expected a list");
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(convert<T>(v[i], key(k) + "[" + std::to_string(i) + "]"));
    return true;
  }

  Section child(const std::string& k) { return Section(raw(k), key(k)); }

  void finish() const {
    if (!node_ || node_.IsNull()) return;
    for (const auto& kv : node_) {
      const auto k = kv.first.as<std::string>();
      if (!used_.count(k)) throw ConfigError(key(k), "unknown key");
    }
  }

  template <class T>
  static T convert(const YAML::Node& v, const std::string& where) {
    if (!v.IsScalar()) throw ConfigError(where, "expected a scalar");
    try {
      return v.as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError(where, "cannot read '" + v.Scalar() + "'");
    }
  }

 private:
  YAML::Node node_;
  std::string path_;
  std::set<std::string> used_;
};

std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

void read_model(Section s, model::ModelConfig& m) {
  std::string text;
  if (s.get("architecture", text)) m.architecture = model::parse_architecture(upper(text));
  s.get("layers", m.layers);
  s.get("width", m.width);
  if (s.get("activation", text)) m.activation = model::parse_activation(lower(text));
  s.get("omega0", m.omega0);
  s.get("time_column", m.time_column);
  Section mfn = s.child("mfn");
  mfn.get("input_scale", m.mfn.input_scale);
  mfn.get("gabor_alpha", m.mfn.gabor_alpha);
  mfn.get("gabor_beta", m.mfn.gabor_beta);
  mfn.finish();
  s.finish();
}

void read_encoding(Section s, enc::EncodingSpec& e) {
  std::string text;
  if (s.get("kind", text)) e.kind = enc::parse_encoding_kind(lower(text));
  s.get("frequencies", e.frequencies);
  s.get("bandwidth", e.bandwidth);
  std::vector<std::string> rules;
  if (s.get_list("rules", rules)) {
    e.rules.clear();
    for (const auto& r : rules) e.rules.push_back(enc::parse_group_rule(lower(r)));
  }
  Section h = s.child("hash");
  h.get("levels", e.hash.levels);
  h.get("features", e.hash.features);
  h.get("log2_table_size", e.hash.log2_table_size);
  h.get("min_resolution", e.hash.min_resolution);
  h.get("max_resolution", e.hash.max_resolution);
  h.get("aux_count", e.hash.aux_count);
  h.finish();
  s.finish();
}

}  // namespace

RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::Exception& e) {
    throw ConfigError("", "malformed YAML at line " + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  RunConfig c;
  Section top(root, "");
  top.get("schema", c.schema);
  if (c.schema != kSchemaVersion)
    throw ConfigError("schema", "unsupported schema " + std::to_string(c.schema) + " (expected " +
                                    std::to_string(kSchemaVersion) + ")");
  top.get("name", c.name);
  std::uint64_t seed;
  if (top.get("seed", seed)) c.seed = seed;
  top.get_path("out", c.out, base);

  Section d = top.child("data");
  d.get("kind", c.data.kind);
  c.data.kind = lower(c.data.kind);
  static const std::set<std::string> kinds{"auto", "image", "points", "tetmesh", "sdf"};
  if (!kinds.count(c.data.kind)) throw ConfigError("data.kind", "unknown data kind '" + c.data.kind + "'");
  d.get_path("path", c.data.path, base);
  d.get_list("values", c.data.values);
  d.finish();

  read_model(top.child("model"), c.model);
  read_encoding(top.child("encoding"), c.model.encoding);

  Section t = top.child("train");
  t.get("iterations", c.train.iterations);
  t.get("batch_size", c.train.batch_size);
  t.get("lr", c.train.lr);
  t.get("log_every", c.train.log_every);
  t.get("smooth_window", c.train.smooth_window);
  t.get_list("components", c.components);
  t.finish();

  Section e = top.child("eval");
  e.get("grid", c.eval.grid);
  e.get("node_coincident", c.eval.node_coincident);
  e.get_path("mesh", c.eval.mesh, base);
  e.get_list("steps", c.eval.steps);
  if (YAML::Node p = e.raw("profile"); p && !p.IsNull()) {
    if (!p.IsSequence() || p.size() < 2) throw ConfigError("eval.profile", "expected a list of at least two points");
    const std::size_t dim = p[0].IsSequence() ? p[0].size() : 0;
    if (dim == 0) throw ConfigError("eval.profile", "points must be lists of coordinates");
    c.eval.profile.resize(static_cast<Index>(p.size()), static_cast<Index>(dim));
    for (std::size_t i = 0; i < p.size(); ++i) {
      const std::string where = "eval.profile[" + std::to_string(i) + "]";
      if (!p[i].IsSequence() || p[i].size() != dim) throw ConfigError(where, "expected " + std::to_string(dim) + " coordinates");
      for (std::size_t j = 0; j < dim; ++j)
        c.eval.profile(static_cast<Index>(i), static_cast<Index>(j)) = Section::convert<double>(p[i][j], where);
    }
  }
  e.get("profile_samples", c.eval.profile_samples);
  e.get_list("norm_components", c.eval.norm_components);
  e.get("bins", c.eval.bins);
  e.finish();
  if (c.eval.grid < 0 || c.eval.grid == 1) throw ConfigError("eval.grid", "must be 0 (off) or at least 2");
  if (c.eval.bins < 1) throw ConfigError("eval.bins", "must be at least 1");

  Section s = top.child("sdf");
  s.get_path("mesh", c.sdf.mesh, base);
  std::string word;
  if (s.get("scenario", word)) c.sdf.scenario = sdf::parse_scenario(upper(word));
  if (s.get("size", word)) c.sdf.size = sdf::parse_sample_size(lower(word));
  s.get("delta", c.sdf.delta);
  s.get("grid", c.sdf.grid);
  s.finish();
  if (!(c.sdf.delta > 0.0)) throw ConfigError("sdf.delta", "must be positive");
  if (c.sdf.grid < 2) throw ConfigError("sdf.grid", "must be at least 2");

  top.finish();
  train::validate(c.train, 1);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const Error& e) {
    throw ConfigError("", std::string("cannot read config: ") + e.what());
  }
  RunConfig c = parse_run_config(text, path.parent_path());
  if (c.name.empty()) c.name = path.stem().string();
  return c;
}

}  // namespace nrf::cli
