#pragma once

// Reference predictors: weekly historical average and a least-squares
// vector autoregression over the stacked arrival/departure channels.

#include <array>
#include <cstddef>
#include <vector>

#include <nlohmann/json.hpp>

#include "stpn/data.hpp"
#include "stpn/tensor.hpp"

namespace stpn {

/// Mean of observed values at the same weekly slot (weekday x slot of day)
/// over the training range, uniform weights. Slots never observed fall back
/// to the channel mean.
class HistoricalAverage {
 public:
  static HistoricalAverage fit(const DelayTensor& delays, std::size_t begin, std::size_t end);

  /// N x p x 2 minutes for the p steps starting at timeline index `first`.
  Tensor3 predict(const Timeline& timeline, std::size_t first, std::size_t p) const;

  std::size_t period() const { return period_; }
  double slot_value(std::size_t node, std::size_t weekly_slot, std::size_t channel) const;
  bool slot_observed(std::size_t node, std::size_t weekly_slot, std::size_t channel) const;
  const std::array<double, kDelayChannels>& channel_mean() const { return channel_mean_; }

 private:
  std::size_t nodes_ = 0;
  std::size_t slots_per_day_ = 0;
  std::size_t period_ = 0;
  Tensor3 table_;
  Mask3 observed_;
  std::array<double, kDelayChannels> channel_mean_{};
};

std::size_t weekly_slot(const Timeline& timeline, std::size_t index);

/// x_t = c + sum_l B_l x_{t-l} over the 2N series; series index n * 2 + channel.
struct VarModel {
  std::size_t lag = 0;
  std::size_t dim = 0;
  std::vector<Matrix> coef;       // lag matrices, each dim x dim
  std::vector<double> intercept;  // dim
  std::array<double, kDelayChannels> fill{};  // training channel means for missing cells
  bool ridge = false;
  double ridge_lambda = 0.0;
  std::size_t rows = 0;

  /// One step ahead from `history` (oldest first, at least `lag` vectors).
  std::vector<double> step(const std::vector<std::vector<double>>& history) const;
  nlohmann::json metadata() const;
};

/// Least squares over training steps [begin, end), missing cells filled with
/// the training channel mean. Falls back to ridge (lambda 1e-6) when the
/// centred design is rank deficient.
VarModel var_fit(const DelayTensor& delays, std::size_t begin, std::size_t end, std::size_t lag);

/// Iterated one-step forecast from the last `lag` steps of `input`
/// (N x h x 2 minutes, unobserved cells filled). Returns N x p x 2.
Tensor3 var_predict(const VarModel& model, const Tensor3& input, const Mask3& input_mask,
                    std::size_t p);

}  // namespace stpn
