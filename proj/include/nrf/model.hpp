#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nrf/encoding.hpp"
#include "nrf/field_dataset.hpp"
#include "nrf/params.hpp"

namespace nrf::model {

enum class Architecture { Mlp, MlpPe, MlpPe2L, MlpPe2LId, MlpPe2LLin, Siren, MfnFourier, MfnGabor, MheNet };
enum class Activation { Tanh, Silu, Relu, Sine };

inline constexpr Architecture kAllArchitectures[] = {
    Architecture::Mlp,   Architecture::MlpPe,      Architecture::MlpPe2L,  Architecture::MlpPe2LId, Architecture::MlpPe2LLin,
    Architecture::Siren, Architecture::MfnFourier, Architecture::MfnGabor, Architecture::MheNet};

std::string_view to_string(Architecture a);
std::string_view to_string(Activation a);
Architecture parse_architecture(std::string_view s);  // throws ConfigError
Activation parse_activation(std::string_view s);
bool is_mfn(Architecture a);

struct MfnOptions {
  double input_scale = 256.0;  // omega ~ N(0, (input_scale / sqrt(k))^2)
  double gabor_alpha = 6.0;    // gamma ~ Gamma(gabor_alpha / k, rate gabor_beta)
  double gabor_beta = 1.0;
};

struct ModelConfig {
  Architecture architecture = Architecture::Mlp;
  int layers = 5;  // hidden layers; MFN filter count
  int width = 512;
  std::optional<Activation> activation;  // family default when empty
  int in_dim = 1;
  int out_dim = 1;
  enc::EncodingSpec encoding;
  double omega0 = 30.0;
  MfnOptions mfn;
  int time_column = -1;  // frequency-encoded input for the 2L ID / 2L LIN presets
  std::uint64_t seed = 0;
};

void validate(const ModelConfig& cfg);
Activation effective_activation(const ModelConfig& cfg);
// Encoding after applying the architecture preset.
enc::EncodingSpec effective_encoding(const ModelConfig& cfg);
// Closed-form count of trainable scalars.
std::size_t expected_parameter_count(const ModelConfig& cfg);

class Model {
 public:
  Model() = default;
  // Builds and initializes all parameters from cfg.seed.
  explicit Model(const ModelConfig& cfg);
  // Reassembles a model from stored parts (checkpoint load).
  static Model from_parts(const ModelConfig& cfg, ParameterStore store, data::IoNormalization norm);

  // Records the network on the binder's tape. x holds normalized inputs.
  ad::Var forward(const Binder& bind, ad::Var x) const;
  // Inference on normalized inputs, in row blocks; output is normalized.
  Matrix predict_normalized(const Matrix& Xn) const;
  // Physical inputs in, physical outputs out.
  Matrix predict(const Matrix& X) const;

  const ModelConfig& config() const { return cfg_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }
  data::IoNormalization& normalization() { return norm_; }
  const data::IoNormalization& normalization() const { return norm_; }
  const enc::Encoding& encoding() const { return enc_; }
  std::size_t parameter_count() const { return store_.trainable_count(); }

  // Free-form JSON text carried in the checkpoint (run settings).
  std::string metadata;

 private:
  struct Dense {
    std::size_t w, b;
  };
  struct Filter {
    std::size_t omega, phi, mu, gamma;
  };
  void build_slots();
  ad::Var activate(ad::Tape& t, ad::Var v) const;

  ModelConfig cfg_;
  ParameterStore store_;
  data::IoNormalization norm_;
  enc::Encoding enc_;
  std::vector<Dense> dense_;  // hidden layers then output layer
  std::vector<Filter> filters_;
};

// ---- checkpoint ----

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const Model& m);
Model decode_checkpoint(std::string_view bytes, const std::string& source = "<memory>");
void checkpoint_save(const Model& m, const std::filesystem::path& path);
Model checkpoint_load(const std::filesystem::path& path);

struct CheckpointSize {
  std::size_t file_bytes = 0;
  std::size_t stored_reals = 0;
  std::size_t header_bytes = 0;  // everything except the 8-byte reals
  std::size_t eq32_bytes = 0;    // header + 4 * stored_reals
};
CheckpointSize checkpoint_size(const Model& m);

std::string config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(std::string_view text);

}  // namespace nrf::model
