#include "nrf/encoding.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <limits>

#include "nrf/error.hpp"

namespace nrf::enc {
namespace {

constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

std::string slot_name(std::string_view prefix, int j) { return std::string(prefix) + std::to_string(j); }

}  // namespace

std::string_view to_string(EncodingKind k) {
  switch (k) {
    case EncodingKind::None: return "none";
    case EncodingKind::GaussianPe: return "gaussian_pe";
    case EncodingKind::FixedPe2L: return "fixed_pe_2l";
    case EncodingKind::Group: return "group";
    case EncodingKind::HashGrid: return "hash_grid";
  }
  return "?";
}

std::string_view to_string(GroupRule r) {
  switch (r) {
    case GroupRule::Identity: return "identity";
    case GroupRule::Linear: return "linear";
    case GroupRule::GaussianPe: return "gaussian_pe";
    case GroupRule::FixedPe2L: return "fixed_pe_2l";
  }
  return "?";
}

EncodingKind parse_encoding_kind(std::string_view s) {
  for (auto k : {EncodingKind::None, EncodingKind::GaussianPe, EncodingKind::FixedPe2L, EncodingKind::Group,
                 EncodingKind::HashGrid})
    if (to_string(k) == s) return k;
  throw ConfigError("encoding.kind", "unknown encoding '" + std::string(s) + "'");
}

GroupRule parse_group_rule(std::string_view s) {
  for (auto r : {GroupRule::Identity, GroupRule::Linear, GroupRule::GaussianPe, GroupRule::FixedPe2L})
    if (to_string(r) == s) return r;
  throw ConfigError("encoding.rules", "unknown group rule '" + std::string(s) + "'");
}

void validate(const EncodingSpec& s, int in_dim) {
  if (in_dim < 1) throw ConfigError("model.in_dim", "must be at least 1");
  if (s.frequencies < 1) throw ConfigError("encoding.frequencies", "L must be at least 1");
  if (s.frequencies > 52) throw ConfigError("encoding.frequencies", "L must be at most 52");
  if (!(s.bandwidth > 0.0)) throw ConfigError("encoding.bandwidth", "must be positive");
  if (s.kind == EncodingKind::Group) {
    if (static_cast<int>(s.rules.size()) < in_dim)
      throw ConfigError("encoding.rules", "input " + std::to_string(s.rules.size()) + " has no group rule");
    if (static_cast<int>(s.rules.size()) > in_dim)
      throw ConfigError("encoding.rules", std::to_string(s.rules.size()) + " rules for " + std::to_string(in_dim) +
                                              " inputs");
  }
  if (s.kind == EncodingKind::HashGrid) {
    const auto& h = s.hash;
    if (h.levels < 1) throw ConfigError("encoding.hash.levels", "must be at least 1");
    if (h.features < 1) throw ConfigError("encoding.hash.features", "must be at least 1");
    if (h.log2_table_size < 1 || h.log2_table_size > 30)
      throw ConfigError("encoding.hash.log2_table_size", "must lie in [1, 30]");
    if (h.min_resolution < 1) throw ConfigError("encoding.hash.min_resolution", "must be at least 1");
    if (h.max_resolution < h.min_resolution)
      throw ConfigError("encoding.hash.max_resolution", "must be at least min_resolution");
    if (h.aux_count < 0 || h.aux_count >= in_dim)
      throw ConfigError("encoding.hash.aux_count", "must leave at least one spatial input");
    if (in_dim - h.aux_count > 4) throw ConfigError("encoding.hash", "at most 4 hashed inputs are supported");
  }
}

int rule_width(GroupRule r, int L) { return r == GroupRule::FixedPe2L ? 2 * L : L; }

int encoding_width(const EncodingSpec& s, int in_dim) {
  switch (s.kind) {
    case EncodingKind::None: return in_dim;
    case EncodingKind::GaussianPe: return in_dim * s.frequencies;
    case EncodingKind::FixedPe2L: return in_dim * 2 * s.frequencies;
    case EncodingKind::Group: {
      int w = 0;
      for (int j = 0; j < in_dim; ++j) w += rule_width(s.rules.at(static_cast<std::size_t>(j)), s.frequencies);
      return w;
    }
    case EncodingKind::HashGrid: return s.hash.levels * s.hash.features + s.hash.aux_count;
  }
  return 0;
}

std::vector<double> encode_gaussian_pe(double x, std::span<const double> freqs) {
  std::vector<double> out;
  out.reserve(freqs.size());
  for (double f : freqs) out.push_back(std::sqrt(2.0) * std::cos(f * x));
  return out;
}

std::vector<double> encode_fixed_pe_2l(double x, int L) {
  std::vector<double> out(static_cast<std::size_t>(2 * L));
  for (int i = 0; i < L; ++i) {
    const double a = std::ldexp(1.0, i) * x;
    out[static_cast<std::size_t>(i)] = std::sin(a);
    out[static_cast<std::size_t>(L + i)] = std::cos(a);
  }
  return out;
}

GroupRule Encoding::rule_for(int j) const {
  switch (spec_.kind) {
    case EncodingKind::GaussianPe: return GroupRule::GaussianPe;
    case EncodingKind::FixedPe2L: return GroupRule::FixedPe2L;
    case EncodingKind::Group: return spec_.rules.at(static_cast<std::size_t>(j));
    default: return GroupRule::Identity;
  }
}

Encoding::Encoding(const EncodingSpec& spec, int in_dim, ParameterStore& store, Rng& rng)
    : spec_(spec), in_dim_(in_dim) {
  validate(spec_, in_dim_);
  width_ = encoding_width(spec_, in_dim_);
  clamped_ = std::make_shared<std::atomic<std::uint64_t>>(0);
  const int L = spec_.frequencies;
  if (spec_.kind == EncodingKind::HashGrid) {
    const auto& h = spec_.hash;
    const Index T = Index{1} << h.log2_table_size;
    std::uniform_real_distribution<double> u(-1e-4, 1e-4);
    for (int l = 0; l < h.levels; ++l) {
      Matrix table(T, h.features);
      for (Index i = 0; i < table.size(); ++i) table.data()[i] = u(rng);
      store.add(slot_name("enc.hash.level", l), std::move(table));
    }
  } else if (spec_.kind != EncodingKind::None) {
    for (int j = 0; j < in_dim_; ++j) {
      switch (rule_for(j)) {
        case GroupRule::GaussianPe: {
          std::normal_distribution<double> nd(0.0, spec_.bandwidth);
          Matrix f(1, L);
          for (int i = 0; i < L; ++i) f(0, i) = nd(rng);
          store.add(slot_name("enc.gauss.freq", j), std::move(f), false);
          break;
        }
        case GroupRule::Linear:
          store.add(slot_name("enc.linear.w", j), Matrix::Ones(1, 1));
          store.add(slot_name("enc.linear.b", j), Matrix::Zero(1, 1));
          break;
        default:
          break;
      }
    }
  }
  bind_slots(store);
}

Encoding Encoding::attach(const EncodingSpec& spec, int in_dim, const ParameterStore& store) {
  Encoding e;
  e.spec_ = spec;
  e.in_dim_ = in_dim;
  validate(e.spec_, in_dim);
  e.width_ = encoding_width(spec, in_dim);
  e.clamped_ = std::make_shared<std::atomic<std::uint64_t>>(0);
  e.bind_slots(store);
  return e;
}

void Encoding::bind_slots(const ParameterStore& store) {
  auto need = [&](const std::string& name, Index rows, Index cols) {
    auto s = store.find(name);
    if (!s) throw CorruptFileError("missing encoding parameter '" + name + "'");
    const Matrix& v = store.at(*s).value;
    if (v.rows() != rows || v.cols() != cols)
      throw CorruptFileError("encoding parameter '" + name + "' has shape " + shape_str(v));
    return *s;
  };
  const int L = spec_.frequencies;
  gauss_slot_.assign(static_cast<std::size_t>(in_dim_), kNone);
  lin_w_slot_.assign(static_cast<std::size_t>(in_dim_), kNone);
  lin_b_slot_.assign(static_cast<std::size_t>(in_dim_), kNone);
  table_slot_.clear();
  resolutions_.clear();
  if (spec_.kind == EncodingKind::HashGrid) {
    const auto& h = spec_.hash;
    resolutions_ = mhe_level_resolutions(h.min_resolution, h.max_resolution, h.levels);
    for (int l = 0; l < h.levels; ++l)
      table_slot_.push_back(need(slot_name("enc.hash.level", l), Index{1} << h.log2_table_size, h.features));
    return;
  }
  if (spec_.kind == EncodingKind::None) return;
  pow2_.resize(1, L);
  for (int i = 0; i < L; ++i) pow2_(0, i) = std::ldexp(1.0, i);
  for (int j = 0; j < in_dim_; ++j) {
    const auto uj = static_cast<std::size_t>(j);
    switch (rule_for(j)) {
      case GroupRule::GaussianPe: gauss_slot_[uj] = need(slot_name("enc.gauss.freq", j), 1, L); break;
      case GroupRule::Linear:
        lin_w_slot_[uj] = need(slot_name("enc.linear.w", j), 1, 1);
        lin_b_slot_[uj] = need(slot_name("enc.linear.b", j), 1, 1);
        break;
      default: break;
    }
  }
}

ad::Var Encoding::record(const Binder& bind, ad::Var x) const {
  ad::Tape& t = bind.tape();
  const Matrix& X = t.value(x);
  if (X.cols() != in_dim_)
    throw ShapeError("encoding expects " + std::to_string(in_dim_) + " inputs, got " + shape_str(X));
  if (spec_.kind == EncodingKind::None) return x;

  std::vector<ad::Var> parts;
  if (spec_.kind == EncodingKind::HashGrid) {
    const auto& h = spec_.hash;
    const int ds = in_dim_ - h.aux_count;
    const Matrix u = (X.leftCols(ds).array() + 1.0) * 0.5;
    std::size_t clamped = 0;
    for (int l = 0; l < h.levels; ++l) {
      std::size_t c = 0;
      HashLookup lk = mhe_lookup(u, resolutions_[static_cast<std::size_t>(l)], h.log2_table_size, &c);
      clamped = std::max(clamped, c);
      parts.push_back(t.gather_rows(bind(table_slot_[static_cast<std::size_t>(l)]), std::move(lk.index),
                                    std::move(lk.weights)));
    }
    if (h.aux_count > 0) parts.push_back(t.slice_cols(x, ds, h.aux_count));
    if (clamped > 0) {
      const auto before = clamped_->fetch_add(clamped);
      if (before == 0)
        spdlog::warn("hash encoding: {} input rows outside the unit box were clamped", clamped);
    }
    return t.concat(parts);
  }

  const int L = spec_.frequencies;
  for (int j = 0; j < in_dim_; ++j) {
    const auto uj = static_cast<std::size_t>(j);
    ad::Var col = in_dim_ == 1 ? x : t.slice_cols(x, j, 1);
    switch (rule_for(j)) {
      case GroupRule::Identity:
        for (int i = 0; i < L; ++i) parts.push_back(col);
        break;
      case GroupRule::Linear: {
        ad::Var g = t.affine(col, bind(lin_w_slot_[uj]), bind(lin_b_slot_[uj]));
        for (int i = 0; i < L; ++i) parts.push_back(g);
        break;
      }
      case GroupRule::GaussianPe: {
        ad::Var z = t.matmul(col, bind(gauss_slot_[uj]));
        parts.push_back(t.scale(t.cos(z), std::sqrt(2.0)));
        break;
      }
      case GroupRule::FixedPe2L: {
        ad::Var z = t.matmul(col, t.constant_ref(pow2_));
        parts.push_back(t.sin(z));
        parts.push_back(t.cos(z));
        break;
      }
    }
  }
  return t.concat(parts);
}

}  // namespace nrf::enc
