#include "stpn/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace stpn {

Metric score(std::span<const double> target, std::span<const double> prediction) {
  if (target.size() != prediction.size()) throw ShapeError("score: length mismatch");
  Metric m;
  m.count = target.size();
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  if (m.count == 0) return {nan, nan, nan, 0};
  const double n = static_cast<double>(m.count);
  double abs_sum = 0.0, sse = 0.0, mean = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double e = target[i] - prediction[i];
    abs_sum += std::abs(e);
    sse += e * e;
    mean += target[i];
  }
  mean /= n;
  double sst = 0.0;
  for (double x : target) sst += (x - mean) * (x - mean);
  m.mae = abs_sum / n;
  m.rmse = std::sqrt(sse / n);
  m.r2 = sst > 0.0 ? 1.0 - sse / sst : nan;
  return m;
}

namespace {

nlohmann::json metric_json(const Metric& m) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  return {{"mae", num(m.mae)}, {"rmse", num(m.rmse)}, {"r2", num(m.r2)}, {"count", m.count}};
}

const char* channel_name(std::size_t c) { return c == kArrival ? "arrival" : "departure"; }

}  // namespace

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j;
  j["schema_version"] = kMetricsSchemaVersion;
  j["model"] = model;
  j["aggregation"] = aggregation == HorizonAggregation::step ? "step" : "cumulative";
  j["windows"] = windows;
  j["horizons"] = horizons;
  nlohmann::json channels = nlohmann::json::object();
  for (std::size_t c = 0; c < kDelayChannels; ++c) {
    nlohmann::json slices_json = nlohmann::json::array();
    for (std::size_t k = 0; k < horizons.size(); ++k) {
      auto s = metric_json(slices[c][k]);
      s["step"] = horizons[k];
      s["minutes"] = horizons[k] * slot_minutes;
      slices_json.push_back(std::move(s));
    }
    channels[channel_name(c)] = {{"slices", slices_json}, {"all_steps", metric_json(channel_overall[c])}};
  }
  j["channels"] = channels;
  j["overall"] = metric_json(overall);
  return j;
}

MetricsAccumulator::MetricsAccumulator(std::size_t p, std::vector<std::size_t> horizons,
                                       HorizonAggregation aggregation)
    : p_(p), aggregation_(aggregation) {
  for (auto hz : horizons) {
    if (hz < 1) throw std::invalid_argument("horizon steps are 1-based");
    if (hz <= p) horizons_.push_back(hz);
  }
  for (std::size_t c = 0; c < kDelayChannels; ++c) {
    target_[c].resize(p);
    pred_[c].resize(p);
  }
}

void MetricsAccumulator::add(const Tensor3& prediction, const Tensor3& target, const Mask3& mask) {
  if (!prediction.same_shape(target) || !mask.matches(target) || target.steps() != p_ ||
      target.channels() != kDelayChannels) {
    throw ShapeError("metrics: prediction " + prediction.shape_string() + " vs target " +
                     target.shape_string());
  }
  ++windows_;
  for (std::size_t n = 0; n < target.nodes(); ++n)
    for (std::size_t s = 0; s < p_; ++s)
      for (std::size_t c = 0; c < kDelayChannels; ++c)
        if (mask(n, s, c)) {
          target_[c][s].push_back(target(n, s, c));
          pred_[c][s].push_back(prediction(n, s, c));
        }
}

MetricsReport MetricsAccumulator::report(std::string model) const {
  MetricsReport r;
  r.model = std::move(model);
  r.aggregation = aggregation_;
  r.horizons = horizons_;
  r.windows = windows_;
  auto gather = [&](std::size_t c, std::size_t from, std::size_t to, std::vector<double>& t,
                    std::vector<double>& p) {
    for (std::size_t s = from; s < to; ++s) {
      t.insert(t.end(), target_[c][s].begin(), target_[c][s].end());
      p.insert(p.end(), pred_[c][s].begin(), pred_[c][s].end());
    }
  };
  std::vector<double> all_t, all_p;
  for (std::size_t c = 0; c < kDelayChannels; ++c) {
    for (auto hz : horizons_) {
      std::vector<double> t, p;
      gather(c, aggregation_ == HorizonAggregation::step ? hz - 1 : 0, hz, t, p);
      r.slices[c].push_back(score(t, p));
    }
    std::vector<double> t, p;
    gather(c, 0, p_, t, p);
    r.channel_overall[c] = score(t, p);
    all_t.insert(all_t.end(), t.begin(), t.end());
    all_p.insert(all_p.end(), p.begin(), p.end());
  }
  r.overall = score(all_t, all_p);
  return r;
}

}  // namespace stpn
