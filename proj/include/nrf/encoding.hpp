#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nrf/params.hpp"
#include "nrf/rng.hpp"

namespace nrf::enc {

enum class EncodingKind { None, GaussianPe, FixedPe2L, Group, HashGrid };
enum class GroupRule { Identity, Linear, GaussianPe, FixedPe2L };

std::string_view to_string(EncodingKind k);
std::string_view to_string(GroupRule r);
EncodingKind parse_encoding_kind(std::string_view s);  // throws ConfigError
GroupRule parse_group_rule(std::string_view s);

struct HashGridSpec {
  int levels = 16;
  int features = 2;
  int log2_table_size = 19;
  int min_resolution = 2;
  int max_resolution = 32;
  int aux_count = 0;  // trailing inputs passed through unhashed
};

struct EncodingSpec {
  EncodingKind kind = EncodingKind::None;
  int frequencies = 8;  // L: PE frequency count, repeat count for identity/linear
  double bandwidth = 100.0;
  std::vector<GroupRule> rules;  // group kind only, one per input
  HashGridSpec hash;
  std::uint64_t seed = 0;
};

// Throws ConfigError naming the offending field.
void validate(const EncodingSpec& spec, int in_dim);
int rule_width(GroupRule r, int L);
int encoding_width(const EncodingSpec& spec, int in_dim);

std::vector<double> encode_gaussian_pe(double x, std::span<const double> freqs);
std::vector<double> encode_fixed_pe_2l(double x, int L);

// ---- multiresolution hash grid ----

std::uint32_t mhe_hash(std::span<const std::int64_t> corner, int log2_table_size);
std::vector<int> mhe_level_resolutions(int min_resolution, int max_resolution, int levels);
// True when every vertex of the level fits in the table without hashing.
bool mhe_level_is_dense(int resolution, int dims, int log2_table_size);

// Corner rows and d-linear weights for one level, each (B x 2^dims), corner
// order is the bit pattern of the offset. Coordinates outside [0,1] are
// clamped; the number of clamped rows is added to *clamped.
struct HashLookup {
  std::vector<std::int64_t> index;
  Matrix weights;
};
HashLookup mhe_lookup(const Matrix& x01, int resolution, int log2_table_size, std::size_t* clamped = nullptr);

// Plain evaluation: levels concatenated, then aux columns.
Matrix mhe_encode(const Matrix& x01, std::span<const Matrix> tables, const HashGridSpec& spec, const Matrix& aux);

// Encoding instance bound to slots of a ParameterStore.
class Encoding {
 public:
  Encoding() = default;
  // Registers trainable parameters and constant buffers in `store`.
  Encoding(const EncodingSpec& spec, int in_dim, ParameterStore& store, Rng& rng);
  // Rebinds to parameters already present in `store` (checkpoint load).
  static Encoding attach(const EncodingSpec& spec, int in_dim, const ParameterStore& store);

  // x holds inputs normalized to [-1, 1].
  ad::Var record(const Binder& bind, ad::Var x) const;

  int in_dim() const { return in_dim_; }
  int width() const { return width_; }
  const EncodingSpec& spec() const { return spec_; }
  std::uint64_t clamp_count() const { return clamped_ ? clamped_->load() : 0; }

 private:
  GroupRule rule_for(int j) const;
  void bind_slots(const ParameterStore& store);

  EncodingSpec spec_;
  int in_dim_ = 0;
  int width_ = 0;
  std::vector<std::size_t> gauss_slot_, lin_w_slot_, lin_b_slot_;  // per input, npos if unused
  std::vector<std::size_t> table_slot_;
  std::vector<int> resolutions_;
  Matrix pow2_;
  std::shared_ptr<std::atomic<std::uint64_t>> clamped_;
};

}  // namespace nrf::enc
