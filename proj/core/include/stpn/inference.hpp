#pragma once

// Prediction, evaluation, counterfactual intervention and attention export on
// top of a loaded checkpoint, dataset and graph.

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stpn/baselines.hpp"
#include "stpn/checkpoint.hpp"
#include "stpn/data.hpp"
#include "stpn/graph.hpp"
#include "stpn/metrics.hpp"
#include "stpn/model.hpp"

namespace stpn {

class UnknownAirportError : public std::invalid_argument {
 public:
  UnknownAirportError(const std::string& code, const std::vector<std::string>& valid);
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

/// Immutable bundle used by every read-only entry point; safe to share
/// between threads.
class Predictor {
 public:
  Predictor(Checkpoint checkpoint, std::shared_ptr<const Dataset> dataset, MultiGraph graph);

  const ModelConfig& config() const { return checkpoint_.config; }
  const Checkpoint& checkpoint() const { return checkpoint_; }
  const Dataset& dataset() const { return *dataset_; }
  const MultiGraph& graph() const { return graph_; }
  std::span<const DiffusionTerm> supports() const { return supports_; }

  /// Minutes in, minutes out. Unobserved input cells are filled with the
  /// channel mean (0 after normalization).
  Tensor3 predict_minutes(const Tensor3& input, const Mask3& mask, std::span<const int> weather,
                          std::span<const int> pos_in, std::span<const int> pos_out,
                          AttentionMaps* attention = nullptr) const;

  /// Input window starting at timeline index `start`; targets follow it.
  Tensor3 predict_window(std::size_t start, AttentionMaps* attention = nullptr) const;

  /// Timeline index of a window whose first input slot is `window_start`.
  /// Throws std::invalid_argument when the slot is not on the timeline or
  /// the input window runs past its end.
  std::size_t window_index(Timestamp window_start) const;

  std::size_t airport_index(const std::string& code) const;
  std::vector<std::string> airport_codes() const;

 private:
  Checkpoint checkpoint_;
  std::shared_ptr<const Dataset> dataset_;
  MultiGraph graph_;
  std::vector<DiffusionTerm> supports_;
};

/// Slot-of-day indices for `count` steps starting at timeline index `start`.
std::vector<int> slot_positions(const Timeline& timeline, std::size_t start, std::size_t count);

enum class Forecaster { stpn, ha, var };
Forecaster forecaster_from_string(const std::string& name);
const char* to_string(Forecaster f);

struct EvaluateOptions {
  std::vector<std::size_t> horizons{3, 6, 12};
  HorizonAggregation aggregation = HorizonAggregation::step;
  std::size_t var_lag = 12;
  std::size_t stride = 1;
};

/// Scores the test segment. HA and VAR are fitted on the training segment;
/// `predictor` is only consulted for the STPN forecaster and may be null
/// otherwise.
MetricsReport evaluate(Forecaster forecaster, const Dataset& dataset, std::size_t h, std::size_t p,
                       const Predictor* predictor, const EvaluateOptions& options = {});

struct InterventionResult {
  Timestamp window_start = 0;
  std::vector<std::string> airports;     // every node, model order
  std::vector<std::string> intervened;   // the zeroed airports
  std::vector<Timestamp> target_times;
  Tensor3 factual;      // minutes
  Tensor3 counterfactual;
  Tensor3 delta;        // factual - counterfactual

  nlohmann::json to_json() const;
};

/// Sets the departure history of `airports` to 0 minutes (observed) over
/// the whole input window and reports the change in predictions.
InterventionResult intervene(const Predictor& predictor, Timestamp window_start,
                             const std::vector<std::string>& airports);

struct PredictionResult {
  Timestamp window_start = 0;
  std::vector<std::string> airports;
  std::vector<Timestamp> target_times;
  Tensor3 minutes;
  nlohmann::json to_json() const;
};

PredictionResult predict_at(const Predictor& predictor, Timestamp window_start);

struct AttentionExport {
  Timestamp window_start = 0;
  AttentionMaps maps;
  nlohmann::json to_json() const;
};

AttentionExport export_attention(const Predictor& predictor, Timestamp window_start);
inline constexpr std::uint32_t kAttentionFormatVersion = 1;
void save_attention(const AttentionExport& attention, const std::filesystem::path& path);
AttentionExport load_attention(const std::filesystem::path& path);

inline constexpr int kApiSchemaVersion = 1;

/// N x steps x 2 nested arrays.
nlohmann::json tensor_json(const Tensor3& t);

}  // namespace stpn
