#pragma once

// Mini-batch Adam on the masked RMSE with best-validation selection.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "stpn/checkpoint.hpp"
#include "stpn/data.hpp"
#include "stpn/graph.hpp"
#include "stpn/model.hpp"

namespace stpn {

struct TrainOptions {
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  ad::AdamOptions adam;
  std::size_t stride = 1;
  /// Stop after this many optimizer steps in total; 0 = no limit.
  std::size_t max_steps = 0;
  /// Stop starting new epochs after this many seconds; 0 = no limit.
  double time_budget_seconds = 0.0;
  /// Called after every epoch.
  std::function<void(const nlohmann::json&)> on_epoch;
  /// Called after every optimizer step with the updated parameters.
  std::function<void(std::size_t step, const ad::ParamStore&)> on_step;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean batch loss, normalized units
  double val_rmse = 0.0;    // minutes
  std::size_t steps = 0;
  double seconds = 0.0;
};

struct TrainResult {
  /// Best-validation parameters (the initial ones when nothing improved).
  Checkpoint checkpoint;
  std::vector<EpochLog> history;
  bool aborted = false;
  std::string abort_reason;
};

/// Diffusion supports for `config` built from `graph`; rejects a relation
/// count that differs from the config.
std::vector<DiffusionTerm> model_supports(const ModelConfig& config, const MultiGraph& graph);

/// Normalized model input for a window (masked cells 0).
struct NormalizedWindow {
  Sample sample;
  Tensor3 x;
  Tensor3 y;
  ModelInput input() const;
};
NormalizedWindow normalize_window(Sample sample, const ZScore& zscore);

/// Pooled masked RMSE in minutes over every window of `windows`.
double validation_rmse(const ModelConfig& config, const ad::ParamStore& params,
                       std::span<const DiffusionTerm> supports, const ZScore& zscore,
                       const WindowedDataset& windows);

TrainResult train(const ModelConfig& config, const Dataset& dataset, const MultiGraph& graph,
                  const TrainOptions& options);

}  // namespace stpn
