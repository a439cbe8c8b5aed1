#include "nrf/model.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "nrf/error.hpp"

namespace nrf::model {
namespace {

constexpr Index kPredictBlock = 8192;

std::string idx_name(std::string_view prefix, std::size_t i, std::string_view suffix) {
  return std::string(prefix) + std::to_string(i) + std::string(suffix);
}

Matrix uniform(Index rows, Index cols, double bound, Rng& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

std::size_t dense_count(std::size_t in, std::size_t w, std::size_t hidden, std::size_t out) {
  return (in * w + w) + (hidden - 1) * (w * w + w) + (w * out + out);
}

}  // namespace

std::string_view to_string(Architecture a) {
  switch (a) {
    case Architecture::Mlp: return "MLP";
    case Architecture::MlpPe: return "MLP_PE";
    case Architecture::MlpPe2L: return "MLP_PE_2L";
    case Architecture::MlpPe2LId: return "MLP_PE_2L_ID";
    case Architecture::MlpPe2LLin: return "MLP_PE_2L_LIN";
    case Architecture::Siren: return "SIREN";
    case Architecture::MfnFourier: return "MFN_FOURIER";
    case Architecture::MfnGabor: return "MFN_GABOR";
    case Architecture::MheNet: return "MHE_NET";
  }
  return "?";
}

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::Silu: return "silu";
    case Activation::Relu: return "relu";
    case Activation::Sine: return "sine";
  }
  return "?";
}

Architecture parse_architecture(std::string_view s) {
  for (auto a : kAllArchitectures)
    if (to_string(a) == s) return a;
  if (s == "MHE") return Architecture::MheNet;
  throw ConfigError("model.architecture", "unknown architecture '" + std::string(s) + "'");
}

Activation parse_activation(std::string_view s) {
  for (auto a : {Activation::Tanh, Activation::Silu, Activation::Relu, Activation::Sine})
    if (to_string(a) == s) return a;
  throw ConfigError("model.activation", "unknown activation '" + std::string(s) + "'");
}

bool is_mfn(Architecture a) { return a == Architecture::MfnFourier || a == Architecture::MfnGabor; }

void validate(const ModelConfig& c) {
  if (c.layers < 1) throw ConfigError("model.layers", "must be at least 1");
  if (c.width < 1) throw ConfigError("model.width", "must be at least 1");
  if (c.in_dim < 1) throw ConfigError("model.in_dim", "must be at least 1");
  if (c.out_dim < 1) throw ConfigError("model.out_dim", "must be at least 1");
  if (!(c.omega0 > 0.0)) throw ConfigError("model.omega0", "must be positive");
  if (c.time_column < -1 || c.time_column >= c.in_dim)
    throw ConfigError("model.time_column", "must index an input or be -1");
  if (!(c.mfn.input_scale > 0.0)) throw ConfigError("model.mfn.input_scale", "must be positive");
  if (!(c.mfn.gabor_alpha > 0.0)) throw ConfigError("model.mfn.gabor_alpha", "must be positive");
  if (!(c.mfn.gabor_beta > 0.0)) throw ConfigError("model.mfn.gabor_beta", "must be positive");
  if (c.activation) {
    if (c.architecture == Architecture::Siren && *c.activation != Activation::Sine)
      throw ConfigError("model.activation", "SIREN uses sine activations");
    if (is_mfn(c.architecture)) throw ConfigError("model.activation", "MFN networks have no activation");
  }
  if (c.architecture == Architecture::Mlp || c.architecture == Architecture::MheNet ||
      c.architecture == Architecture::MlpPe || c.architecture == Architecture::MlpPe2L ||
      c.architecture == Architecture::MlpPe2LId || c.architecture == Architecture::MlpPe2LLin)
    enc::validate(effective_encoding(c), c.in_dim);
}

Activation effective_activation(const ModelConfig& c) {
  if (c.activation) return *c.activation;
  if (c.architecture == Architecture::MheNet) return Activation::Silu;
  if (c.architecture == Architecture::Siren) return Activation::Sine;
  return Activation::Tanh;
}

enc::EncodingSpec effective_encoding(const ModelConfig& c) {
  enc::EncodingSpec e = c.encoding;
  const int tcol = c.time_column >= 0 ? c.time_column : c.in_dim - 1;
  auto preset = [&](enc::GroupRule others) {
    e.kind = enc::EncodingKind::Group;
    e.rules.assign(static_cast<std::size_t>(c.in_dim), others);
    e.rules[static_cast<std::size_t>(tcol)] = enc::GroupRule::FixedPe2L;
  };
  switch (c.architecture) {
    case Architecture::Mlp: break;
    case Architecture::MlpPe: e.kind = enc::EncodingKind::GaussianPe; break;
    case Architecture::MlpPe2L: e.kind = enc::EncodingKind::FixedPe2L; break;
    case Architecture::MlpPe2LId: preset(enc::GroupRule::Identity); break;
    case Architecture::MlpPe2LLin: preset(enc::GroupRule::Linear); break;
    case Architecture::MheNet: e.kind = enc::EncodingKind::HashGrid; break;
    default: e.kind = enc::EncodingKind::None; break;
  }
  if (e.kind != enc::EncodingKind::Group) e.rules.clear();
  return e;
}

std::size_t expected_parameter_count(const ModelConfig& c) {
  const auto w = static_cast<std::size_t>(c.width), L = static_cast<std::size_t>(c.layers);
  const auto in = static_cast<std::size_t>(c.in_dim), C = static_cast<std::size_t>(c.out_dim);
  if (c.architecture == Architecture::Siren) return dense_count(in, w, L, C);
  if (is_mfn(c.architecture)) {
    const std::size_t per_filter = c.architecture == Architecture::MfnGabor ? (in * w + w + w * in + w) : (in * w + w);
    return L * per_filter + (L - 1) * (w * w + w) + (w * C + C);
  }
  const enc::EncodingSpec e = effective_encoding(c);
  const auto ew = static_cast<std::size_t>(enc::encoding_width(e, c.in_dim));
  std::size_t enc_params = 0;
  if (e.kind == enc::EncodingKind::Group)
    for (auto r : e.rules)
      if (r == enc::GroupRule::Linear) enc_params += 2;
  if (e.kind == enc::EncodingKind::HashGrid)
    enc_params = static_cast<std::size_t>(e.hash.levels) * (std::size_t{1} << e.hash.log2_table_size) *
                 static_cast<std::size_t>(e.hash.features);
  return enc_params + dense_count(ew, w, L, C);
}

Model::Model(const ModelConfig& cfg) : cfg_(cfg) {
  validate(cfg_);
  norm_ = data::IoNormalization::identity(cfg_.in_dim, cfg_.out_dim);
  Rng rng = make_rng(cfg_.seed, "init");
  const Index w = cfg_.width, in = cfg_.in_dim, C = cfg_.out_dim;
  const auto L = static_cast<std::size_t>(cfg_.layers);
  const Architecture a = cfg_.architecture;

  if (a == Architecture::Siren) {
    for (std::size_t i = 0; i < L; ++i) {
      const Index fan_in = i == 0 ? in : w;
      const double bound = i == 0 ? 1.0 / static_cast<double>(fan_in) : std::sqrt(6.0 / static_cast<double>(fan_in));
      store_.add(idx_name("layer", i, ".w"), uniform(fan_in, w, bound, rng));
      store_.add(idx_name("layer", i, ".b"), uniform(1, w, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng));
    }
    store_.add("out.w", uniform(w, C, std::sqrt(6.0 / static_cast<double>(w)), rng));
    store_.add("out.b", uniform(1, C, 1.0 / std::sqrt(static_cast<double>(w)), rng));
  } else if (is_mfn(a)) {
    const bool gabor = a == Architecture::MfnGabor;
    const double k = static_cast<double>(L);
    const double s = cfg_.mfn.input_scale / std::sqrt(k);
    std::normal_distribution<double> nd(0.0, s);
    std::gamma_distribution<double> gd(cfg_.mfn.gabor_alpha / k, 1.0 / cfg_.mfn.gabor_beta);
    for (std::size_t i = 0; i < L; ++i) {
      Matrix omega(in, w);
      for (Index j = 0; j < omega.size(); ++j) omega.data()[j] = nd(rng);
      Matrix phi = uniform(1, w, std::numbers::pi, rng);
      if (gabor) {
        Matrix gamma(1, w);
        for (Index j = 0; j < w; ++j) gamma(0, j) = gd(rng);
        for (Index j = 0; j < w; ++j) omega.col(j) *= std::sqrt(gamma(0, j));
        Matrix mu = uniform(w, in, 1.0, rng);
        store_.add(idx_name("filter", i, ".omega"), std::move(omega));
        store_.add(idx_name("filter", i, ".phi"), std::move(phi));
        store_.add(idx_name("filter", i, ".mu"), std::move(mu));
        store_.add(idx_name("filter", i, ".gamma"), std::move(gamma));
      } else {
        store_.add(idx_name("filter", i, ".omega"), std::move(omega));
        store_.add(idx_name("filter", i, ".phi"), std::move(phi));
      }
    }
    const double hb = std::sqrt(1.0 / static_cast<double>(w));
    for (std::size_t i = 0; i + 1 < L; ++i) {
      store_.add(idx_name("linear", i, ".w"), uniform(w, w, hb, rng));
      store_.add(idx_name("linear", i, ".b"), uniform(1, w, hb, rng));
    }
    store_.add("out.w", uniform(w, C, hb, rng));
    store_.add("out.b", uniform(1, C, hb, rng));
  } else {
    Rng erng = make_rng(cfg_.seed, "encoding");
    enc_ = enc::Encoding(effective_encoding(cfg_), cfg_.in_dim, store_, erng);
    Index fan_in = enc_.width();
    for (std::size_t i = 0; i < L; ++i) {
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + w));
      store_.add(idx_name("layer", i, ".w"), uniform(fan_in, w, bound, rng));
      store_.add(idx_name("layer", i, ".b"), Matrix::Zero(1, w));
      fan_in = w;
    }
    store_.add("out.w", uniform(w, C, std::sqrt(6.0 / static_cast<double>(w + C)), rng));
    store_.add("out.b", Matrix::Zero(1, C));
  }
  build_slots();
}

Model Model::from_parts(const ModelConfig& cfg, ParameterStore store, data::IoNormalization norm) {
  validate(cfg);
  Model m;
  m.cfg_ = cfg;
  m.store_ = std::move(store);
  m.norm_ = std::move(norm);
  if (m.norm_.in_dim() != cfg.in_dim || m.norm_.out_dim() != cfg.out_dim)
    throw CorruptFileError("normalization block does not match the model dimensions");
  if (m.cfg_.architecture != Architecture::Siren && !is_mfn(m.cfg_.architecture))
    m.enc_ = enc::Encoding::attach(effective_encoding(cfg), cfg.in_dim, m.store_);
  m.build_slots();
  if (m.store_.trainable_count() != expected_parameter_count(cfg))
    throw CorruptFileError("parameter count " + std::to_string(m.store_.trainable_count()) +
                           " does not match the configuration");
  return m;
}

void Model::build_slots() {
  auto need = [&](const std::string& name, Index rows, Index cols) {
    auto s = store_.find(name);
    if (!s) throw CorruptFileError("missing parameter '" + name + "'");
    const Matrix& v = store_.at(*s).value;
    if (v.rows() != rows || v.cols() != cols)
      throw CorruptFileError("parameter '" + name + "' has shape " + shape_str(v) + ", expected (" +
                             std::to_string(rows) + "x" + std::to_string(cols) + ")");
    return *s;
  };
  const Index w = cfg_.width, in = cfg_.in_dim, C = cfg_.out_dim;
  const auto L = static_cast<std::size_t>(cfg_.layers);
  dense_.clear();
  filters_.clear();
  if (is_mfn(cfg_.architecture)) {
    const bool gabor = cfg_.architecture == Architecture::MfnGabor;
    for (std::size_t i = 0; i < L; ++i) {
      Filter f{need(idx_name("filter", i, ".omega"), in, w), need(idx_name("filter", i, ".phi"), 1, w), 0, 0};
      if (gabor) {
        f.mu = need(idx_name("filter", i, ".mu"), w, in);
        f.gamma = need(idx_name("filter", i, ".gamma"), 1, w);
      }
      filters_.push_back(f);
    }
    for (std::size_t i = 0; i + 1 < L; ++i)
      dense_.push_back({need(idx_name("linear", i, ".w"), w, w), need(idx_name("linear", i, ".b"), 1, w)});
  } else {
    Index fan_in = cfg_.architecture == Architecture::Siren ? in : enc_.width();
    for (std::size_t i = 0; i < L; ++i) {
      dense_.push_back({need(idx_name("layer", i, ".w"), fan_in, w), need(idx_name("layer", i, ".b"), 1, w)});
      fan_in = w;
    }
  }
  dense_.push_back({need("out.w", w, C), need("out.b", 1, C)});
}

ad::Var Model::activate(ad::Tape& t, ad::Var v) const {
  switch (effective_activation(cfg_)) {
    case Activation::Tanh: return t.tanh(v);
    case Activation::Silu: return t.silu(v);
    case Activation::Relu: return t.relu(v);
    case Activation::Sine: return t.sin(v);
  }
  return v;
}

ad::Var Model::forward(const Binder& bind, ad::Var x) const {
  ad::Tape& t = bind.tape();
  const Matrix& X = t.value(x);
  if (X.cols() != cfg_.in_dim)
    throw ShapeError("shape mismatch at node " + std::to_string(x.id) + " (input): expected " +
                     std::to_string(cfg_.in_dim) + " columns, got " + shape_str(X));
  const Architecture a = cfg_.architecture;
  if (is_mfn(a)) {
    const bool gabor = a == Architecture::MfnGabor;
    auto filter = [&](const Filter& f) {
      ad::Var s = t.sin(t.affine(x, bind(f.omega), bind(f.phi)));
      if (!gabor) return s;
      ad::Var d2 = t.sq_dist(x, bind(f.mu));
      ad::Var env = t.exp(t.scale(t.mul_row(d2, bind(f.gamma)), -0.5));
      return t.hadamard(s, env);
    };
    ad::Var z = filter(filters_[0]);
    for (std::size_t i = 1; i < filters_.size(); ++i) {
      const Dense& d = dense_[i - 1];
      z = t.hadamard(t.affine(z, bind(d.w), bind(d.b)), filter(filters_[i]));
    }
    return t.affine(z, bind(dense_.back().w), bind(dense_.back().b));
  }
  if (a == Architecture::Siren) {
    ad::Var h = x;
    for (std::size_t i = 0; i + 1 < dense_.size(); ++i) {
      ad::Var z = t.affine(h, bind(dense_[i].w), bind(dense_[i].b));
      if (i == 0) z = t.scale(z, cfg_.omega0);
      h = t.sin(z);
    }
    return t.affine(h, bind(dense_.back().w), bind(dense_.back().b));
  }
  ad::Var h = enc_.record(bind, x);
  for (std::size_t i = 0; i + 1 < dense_.size(); ++i) h = activate(t, t.affine(h, bind(dense_[i].w), bind(dense_[i].b)));
  return t.affine(h, bind(dense_.back().w), bind(dense_.back().b));
}

Matrix Model::predict_normalized(const Matrix& Xn) const {
  if (Xn.cols() != cfg_.in_dim)
    throw ShapeError("predict: expected " + std::to_string(cfg_.in_dim) + " input columns, got " + shape_str(Xn));
  Matrix out(Xn.rows(), cfg_.out_dim);
  for (Index r0 = 0; r0 < Xn.rows(); r0 += kPredictBlock) {
    const Index n = std::min(kPredictBlock, Xn.rows() - r0);
    ad::Tape t;
    Binder bind(t, store_);
    ad::Var x = t.constant(Xn.middleRows(r0, n));
    out.middleRows(r0, n) = t.value(forward(bind, x));
  }
  return out;
}

Matrix Model::predict(const Matrix& X) const {
  return norm_.denormalize_outputs(predict_normalized(norm_.normalize_inputs(X)));
}

}  // namespace nrf::model
