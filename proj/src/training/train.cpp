#include "nrf/train.hpp"

#include <spdlog/spdlog.h>

#include <charconv>
#include <cmath>

#include "nrf/binio.hpp"
#include "nrf/error.hpp"

namespace nrf::train {

void validate(const TrainConfig& c, int out_dim) {
  if (c.iterations < 1) throw ConfigError("train.iterations", "must be at least 1");
  if (c.batch_size < 1) throw ConfigError("train.batch_size", "must be at least 1");
  if (!(c.lr > 0.0) || !std::isfinite(c.lr)) throw ConfigError("train.lr", "must be positive");
  if (c.smooth_window < 1) throw ConfigError("train.smooth_window", "must be at least 1");
  if (c.log_every < 0) throw ConfigError("train.log_every", "must be non-negative");
  std::vector<bool> seen(static_cast<std::size_t>(out_dim), false);
  for (int k : c.component_mask) {
    if (k < 0 || k >= out_dim)
      throw ConfigError("train.components", "component " + std::to_string(k) + " is out of range");
    if (seen[static_cast<std::size_t>(k)]) throw ConfigError("train.components", "duplicate component");
    seen[static_cast<std::size_t>(k)] = true;
  }
}

std::vector<Index> sample_indices(Index n, Index batch_size, Rng& rng) {
  if (n < 1) throw DataError("cannot sample a batch from an empty dataset");
  std::uniform_int_distribution<Index> u(0, n - 1);
  std::vector<Index> idx(static_cast<std::size_t>(batch_size));
  for (auto& i : idx) i = u(rng);
  return idx;
}

Batch sample_batch(const Matrix& X, const Matrix& Y, Index batch_size, Rng& rng) {
  const auto idx = sample_indices(X.rows(), batch_size, rng);
  Batch b{Matrix(batch_size, X.cols()), Matrix(batch_size, Y.cols())};
  for (Index r = 0; r < batch_size; ++r) {
    b.X.row(r) = X.row(idx[static_cast<std::size_t>(r)]);
    b.Y.row(r) = Y.row(idx[static_cast<std::size_t>(r)]);
  }
  return b;
}

ad::Var masked_mse(ad::Tape& t, ad::Var pred, const Matrix& target, const std::vector<int>& mask) {
  ad::Var diff = t.sub(pred, t.constant(target));
  double count = static_cast<double>(target.size());
  if (!mask.empty() && static_cast<Index>(mask.size()) != target.cols()) {
    Matrix w = Matrix::Zero(target.rows(), target.cols());
    for (int k : mask) w.col(k).setOnes();
    diff = t.hadamard(diff, t.constant(std::move(w)));
    count = static_cast<double>(target.rows()) * static_cast<double>(mask.size());
  }
  return t.scale(t.sum(t.square(diff)), 1.0 / count);
}

LossTrace train_normalized(model::Model& m, const data::NormalizedData& nd, const TrainConfig& cfg,
                           const Progress& progress) {
  validate(cfg, m.config().out_dim);
  if (nd.X.rows() == 0) throw DataError("training dataset is empty");
  if (nd.X.cols() != m.config().in_dim || nd.Y.cols() != m.config().out_dim)
    throw ShapeError("dataset is " + shape_str(nd.X) + " -> " + shape_str(nd.Y) + " but the model maps " +
                     std::to_string(m.config().in_dim) + " -> " + std::to_string(m.config().out_dim));
  Rng rng = make_rng(cfg.seed, "batch");
  ad::AdamState adam;
  adam.opt.lr = cfg.lr;
  auto params = m.params().trainable();
  std::vector<Matrix> good;
  good.reserve(params.size());
  for (auto* p : params) good.push_back(p->value);

  LossTrace trace;
  trace.mse.reserve(static_cast<std::size_t>(cfg.iterations));
  for (int it = 1; it <= cfg.iterations; ++it) {
    Batch b = sample_batch(nd.X, nd.Y, cfg.batch_size, rng);
    double loss = 0.0;
    try {
      m.params().zero_grad();
      ad::Tape t;
      Binder bind(t, m.params());
      ad::Var l = masked_mse(t, m.forward(bind, t.constant(std::move(b.X))), b.Y, cfg.component_mask);
      loss = t.value(l)(0, 0);
      t.backward(l);
    } catch (const NumericError& e) {
      for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = good[i];
      std::string where;
      if (!cfg.abort_checkpoint.empty()) {
        model::checkpoint_save(m, cfg.abort_checkpoint);
        where = "; last good checkpoint written to " + cfg.abort_checkpoint.string();
      }
      throw NumericError("training diverged at iteration " + std::to_string(it) + ": " + e.what() + where);
    }
    trace.mse.push_back(loss);
    for (std::size_t i = 0; i < params.size(); ++i) good[i] = params[i]->value;
    ad::adam_step(adam, params);
    if (cfg.log_every > 0 && (it % cfg.log_every == 0 || it == cfg.iterations))
      spdlog::info("iteration {}/{}: mse {:.6e}", it, cfg.iterations, loss);
    if (progress) progress(it, loss);
  }
  return trace;
}

LossTrace train(model::Model& m, const data::FieldDataset& ds, const TrainConfig& cfg, const Progress& progress) {
  ds.validate();
  data::NormalizedData nd = data::normalize_io(ds);
  m.normalization() = nd.norm;
  return train_normalized(m, nd, cfg, progress);
}

std::vector<double> smooth_trace(const std::vector<double>& x, int window) {
  if (window < 1) throw ConfigError("train.smooth_window", "must be at least 1");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t b = i + 1 >= static_cast<std::size_t>(window) ? i + 1 - static_cast<std::size_t>(window) : 0;
    double acc = 0.0;
    for (std::size_t j = b; j <= i; ++j) acc += x[j];
    out[i] = acc / static_cast<double>(i + 1 - b);
  }
  return out;
}

std::string encode_trace(const LossTrace& trace) {
  std::string s = "# iteration mse\n";
  char buf[64];
  for (std::size_t i = 0; i < trace.mse.size(); ++i) {
    s += std::to_string(i + 1);
    s += ' ';
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, trace.mse[i]);
    s.append(buf, p);
    s += '\n';
  }
  return s;
}

void save_trace(const std::filesystem::path& path, const LossTrace& trace) { io::write_file(path, encode_trace(trace)); }

}  // namespace nrf::train
