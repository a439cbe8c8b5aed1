#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "nrf/adam.hpp"
#include "nrf/field_dataset.hpp"
#include "nrf/model.hpp"
#include "nrf/rng.hpp"

namespace nrf::train {

struct TrainConfig {
  int iterations = 10000;
  Index batch_size = 1024;
  double lr = 1e-4;
  std::uint64_t seed = 0;
  int log_every = 0;  // 0 disables progress logging
  int smooth_window = 1000;
  std::vector<int> component_mask;  // output columns that enter the loss; empty means all
  // Written with the last finite-loss parameters when training diverges.
  std::filesystem::path abort_checkpoint;
};

// Throws ConfigError with the offending key.
void validate(const TrainConfig& cfg, int out_dim);

struct LossTrace {
  std::vector<double> mse;
};

struct Batch {
  Matrix X, Y;
};

// Rows drawn uniformly with replacement.
std::vector<Index> sample_indices(Index n, Index batch_size, Rng& rng);
Batch sample_batch(const Matrix& X, const Matrix& Y, Index batch_size, Rng& rng);

// Mean squared error over the batch and the masked components.
ad::Var masked_mse(ad::Tape& t, ad::Var pred, const Matrix& target, const std::vector<int>& mask);

// Called after each iteration with (iteration, mse).
using Progress = std::function<void(int, double)>;

// Trains on data already normalized with the model's normalization.
LossTrace train_normalized(model::Model& m, const data::NormalizedData& nd, const TrainConfig& cfg,
                           const Progress& progress = {});

// Fits the model's normalization to the dataset, then trains.
LossTrace train(model::Model& m, const data::FieldDataset& ds, const TrainConfig& cfg, const Progress& progress = {});

// Trailing moving average; the first window-1 entries average the available
// prefix.
std::vector<double> smooth_trace(const std::vector<double>& trace, int window);

// Two columns: iteration (1-based) and mse.
std::string encode_trace(const LossTrace& trace);
void save_trace(const std::filesystem::path& path, const LossTrace& trace);

}  // namespace nrf::train
