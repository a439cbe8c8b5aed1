#include <cstring>
#include <json.hpp>

#include "nrf/binio.hpp"
#include "nrf/error.hpp"
#include "nrf/model.hpp"

namespace nrf::model {
namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'N', 'R', 'F', 'C', 'K', 'P', 'T', '1'};

json encoding_json(const enc::EncodingSpec& e) {
  json rules = json::array();
  for (auto r : e.rules) rules.push_back(std::string(enc::to_string(r)));
  return {{"kind", std::string(enc::to_string(e.kind))},
          {"frequencies", e.frequencies},
          {"bandwidth", e.bandwidth},
          {"rules", rules},
          {"hash",
           {{"levels", e.hash.levels},
            {"features", e.hash.features},
            {"log2_table_size", e.hash.log2_table_size},
            {"min_resolution", e.hash.min_resolution},
            {"max_resolution", e.hash.max_resolution},
            {"aux_count", e.hash.aux_count}}},
          {"seed", e.seed}};
}

enc::EncodingSpec encoding_from(const json& j) {
  enc::EncodingSpec e;
  e.kind = enc::parse_encoding_kind(j.at("kind").get<std::string>());
  e.frequencies = j.at("frequencies").get<int>();
  e.bandwidth = j.at("bandwidth").get<double>();
  for (const auto& r : j.at("rules")) e.rules.push_back(enc::parse_group_rule(r.get<std::string>()));
  const json& h = j.at("hash");
  e.hash.levels = h.at("levels").get<int>();
  e.hash.features = h.at("features").get<int>();
  e.hash.log2_table_size = h.at("log2_table_size").get<int>();
  e.hash.min_resolution = h.at("min_resolution").get<int>();
  e.hash.max_resolution = h.at("max_resolution").get<int>();
  e.hash.aux_count = h.at("aux_count").get<int>();
  e.seed = j.at("seed").get<std::uint64_t>();
  return e;
}

json config_json(const ModelConfig& c) {
  json j = {{"architecture", std::string(to_string(c.architecture))},
            {"layers", c.layers},
            {"width", c.width},
            {"in_dim", c.in_dim},
            {"out_dim", c.out_dim},
            {"encoding", encoding_json(c.encoding)},
            {"omega0", c.omega0},
            {"mfn",
             {{"input_scale", c.mfn.input_scale},
              {"gabor_alpha", c.mfn.gabor_alpha},
              {"gabor_beta", c.mfn.gabor_beta}}},
            {"time_column", c.time_column},
            {"seed", c.seed}};
  j["activation"] = c.activation ? json(std::string(to_string(*c.activation))) : json(nullptr);
  return j;
}

ModelConfig config_from(const json& j) {
  ModelConfig c;
  c.architecture = parse_architecture(j.at("architecture").get<std::string>());
  c.layers = j.at("layers").get<int>();
  c.width = j.at("width").get<int>();
  c.in_dim = j.at("in_dim").get<int>();
  c.out_dim = j.at("out_dim").get<int>();
  c.encoding = encoding_from(j.at("encoding"));
  c.omega0 = j.at("omega0").get<double>();
  const json& m = j.at("mfn");
  c.mfn.input_scale = m.at("input_scale").get<double>();
  c.mfn.gabor_alpha = m.at("gabor_alpha").get<double>();
  c.mfn.gabor_beta = m.at("gabor_beta").get<double>();
  c.time_column = j.at("time_column").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  if (!j.at("activation").is_null()) c.activation = parse_activation(j.at("activation").get<std::string>());
  return c;
}

}  // namespace

std::string config_to_json(const ModelConfig& cfg) { return config_json(cfg).dump(); }

ModelConfig config_from_json(std::string_view text) {
  try {
    return config_from(json::parse(text));
  } catch (const json::exception& e) {
    throw CorruptFileError(std::string("bad model configuration block: ") + e.what());
  }
}

std::string encode_checkpoint(const Model& m) {
  io::ByteWriter w;
  w.raw(kMagic, 8);
  w.u32(kCheckpointVersion);
  json block = {{"model", config_json(m.config())}};
  if (!m.metadata.empty()) block["metadata"] = json::parse(m.metadata);
  w.str(block.dump());
  const auto& n = m.normalization();
  w.u32(static_cast<std::uint32_t>(n.in_dim()));
  w.f64s(n.in_lo.data(), static_cast<std::size_t>(n.in_lo.size()));
  w.f64s(n.in_hi.data(), static_cast<std::size_t>(n.in_hi.size()));
  w.u32(static_cast<std::uint32_t>(n.out_dim()));
  w.f64s(n.out_shift.data(), static_cast<std::size_t>(n.out_shift.size()));
  w.f64s(n.out_scale.data(), static_cast<std::size_t>(n.out_scale.size()));
  const auto& ps = m.params().all();
  w.u32(static_cast<std::uint32_t>(ps.size()));
  for (const auto& p : ps) {
    w.str(p.name);
    w.u8(p.trainable ? 1 : 0);
    w.u64(static_cast<std::uint64_t>(p.value.rows()));
    w.u64(static_cast<std::uint64_t>(p.value.cols()));
    w.f64s(p.value.data(), static_cast<std::size_t>(p.value.size()));
  }
  w.crc();
  return w.data();
}

Model decode_checkpoint(std::string_view b, const std::string& src) {
  io::ByteReader r(b, src);
  if (b.size() < 8 || std::memcmp(b.data(), kMagic, 8) != 0) r.fail("bad magic, expected NRFCKPT1");
  r.bytes(8);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw CorruptFileError(src + ": checkpoint version " + std::to_string(version) + " is not supported (expected " +
                           std::to_string(kCheckpointVersion) + ")");
  r.check_trailing_crc();
  json block;
  try {
    block = json::parse(r.str());
  } catch (const json::exception& e) {
    r.fail(std::string("bad configuration block: ") + e.what());
  }
  ModelConfig cfg;
  try {
    cfg = config_from(block.at("model"));
  } catch (const json::exception& e) {
    r.fail(std::string("bad model configuration: ") + e.what());
  } catch (const ConfigError& e) {
    r.fail(std::string("invalid model configuration: ") + e.what());
  }
  data::IoNormalization norm;
  const std::uint32_t din = r.u32();
  if (din != static_cast<std::uint32_t>(cfg.in_dim)) r.fail("normalization input width mismatch");
  norm.in_lo.resize(din);
  norm.in_hi.resize(din);
  r.f64s(norm.in_lo.data(), din);
  r.f64s(norm.in_hi.data(), din);
  const std::uint32_t dout = r.u32();
  if (dout != static_cast<std::uint32_t>(cfg.out_dim)) r.fail("normalization output width mismatch");
  norm.out_shift.resize(dout);
  norm.out_scale.resize(dout);
  r.f64s(norm.out_shift.data(), dout);
  r.f64s(norm.out_scale.data(), dout);
  for (Index c = 0; c < norm.out_scale.size(); ++c)
    if (!(norm.out_scale(c) > 0.0)) r.fail("non-positive output scale");

  ParameterStore store;
  const std::uint32_t np = r.u32();
  for (std::uint32_t i = 0; i < np; ++i) {
    std::string name = r.str(1024);
    const bool trainable = r.u8() != 0;
    const std::uint64_t rows = r.u64(), cols = r.u64();
    if (cols != 0 && rows > (r.remaining() / 8) / cols) r.fail("parameter '" + name + "' exceeds file size");
    Matrix v(static_cast<Index>(rows), static_cast<Index>(cols));
    r.f64s(v.data(), static_cast<std::size_t>(v.size()));
    try {
      store.add(std::move(name), std::move(v), trainable);
    } catch (const UsageError& e) {
      r.fail(e.what());
    }
  }
  if (r.remaining() != 4) r.fail("unexpected trailing bytes");
  Model m;
  try {
    m = Model::from_parts(cfg, std::move(store), std::move(norm));
  } catch (const ConfigError& e) {
    throw CorruptFileError(src + ": invalid model configuration: " + e.what());
  }
  if (block.contains("metadata")) m.metadata = block["metadata"].dump();
  return m;
}

void checkpoint_save(const Model& m, const std::filesystem::path& path) { io::write_file(path, encode_checkpoint(m)); }

Model checkpoint_load(const std::filesystem::path& path) {
  std::string bytes;
  try {
    bytes = io::read_file(path);
  } catch (const DataError& e) {
    throw CorruptFileError(e.what());
  }
  return decode_checkpoint(bytes, path.string());
}

CheckpointSize checkpoint_size(const Model& m) {
  CheckpointSize s;
  s.file_bytes = encode_checkpoint(m).size();
  s.stored_reals = m.params().stored_count();
  s.header_bytes = s.file_bytes - 8 * s.stored_reals;
  s.eq32_bytes = s.header_bytes + 4 * s.stored_reals;
  return s;
}

}  // namespace nrf::model
