#include "stpn/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

#include "stpn/random.hpp"

namespace stpn {

SyntheticData gen_synthetic(const SyntheticOptions& o) {
  if (o.lag_steps < 1) throw std::invalid_argument("gen_synthetic: lag_steps must be >= 1");
  if (o.airports < 2) throw std::invalid_argument("gen_synthetic: need at least two airports");
  o.window.validate();
  const std::size_t N = o.airports;
  Matrix w = o.od_weights.value_or(Matrix(N, N));
  if (w.rows() != N || w.cols() != N) throw ShapeError("gen_synthetic: od_weights must be N x N");
  if (!o.od_weights) {
    if (o.source >= N || o.sink >= N || o.source == o.sink)
      throw std::invalid_argument("gen_synthetic: source and sink must be distinct airports");
    w(o.source, o.sink) = o.weight;
  }

  Rng rng(o.seed);
  SyntheticData out;
  out.weather = us_weather_scheme();
  const int categories = static_cast<int>(out.weather.categories.size());
  for (std::size_t n = 0; n < N; ++n) {
    char code[24];
    std::snprintf(code, sizeof code, "S%02zu", n);
    out.airports.push_back({code, rng.uniform(25.0, 48.0), rng.uniform(-122.0, -70.0)});
  }

  Timeline tl{o.first_day, o.days, o.window};
  const std::size_t T = tl.size(), td = o.window.slots_per_day();

  // Departures: daily profile + persistent shock + weather episodes + noise.
  std::vector<double> base(N), amp(N), arr_level(N);
  for (std::size_t n = 0; n < N; ++n) {
    base[n] = rng.uniform(2.0, 6.0);
    amp[n] = rng.uniform(4.0, 10.0);
    arr_level[n] = rng.uniform(-2.0, 2.0);
  }
  Tensor3 raw(N, T, kDelayChannels);
  CovariateSeq cov{N, T, static_cast<std::size_t>(categories), std::vector<int>(N * T, 0)};
  for (std::size_t n = 0; n < N; ++n) {
    double shock = 0.0;
    int state = 0;
    for (std::size_t t = 0; t < T; ++t) {
      if (state == 0) {
        if (rng.bernoulli(0.01)) state = 1 + static_cast<int>(rng.below(categories - 1));
      } else if (rng.bernoulli(0.12)) {
        state = 0;
      }
      cov.codes[n * T + t] = state;
      shock = o.ar_phi * shock + rng.normal(0.0, o.ar_sigma);
      const double slot = static_cast<double>(t % td);
      raw(n, t, kDeparture) = base[n] + amp[n] * std::sin(std::numbers::pi * slot / td) + shock +
                              (state ? o.weather_shock : 0.0) + rng.normal(0.0, o.noise_sigma);
    }
  }
  // Arrivals: lagged mixture of upstream departures plus noise.
  for (std::size_t v = 0; v < N; ++v)
    for (std::size_t t = 0; t < T; ++t) {
      double s = arr_level[v];
      if (t >= o.lag_steps)
        for (std::size_t u = 0; u < N; ++u) s += w(u, v) * raw(u, t - o.lag_steps, kDeparture);
      raw(v, t, kArrival) = s + rng.normal(0.0, o.noise_sigma);
    }

  DelayTensor d{Tensor3(N, T, kDelayChannels), Mask3(N, T, kDelayChannels), tl, -30.0, 30.0};
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t c = 0; c < kDelayChannels; ++c) {
        if (rng.bernoulli(o.mask_fraction)) continue;
        d.values(n, t, c) = std::clamp(raw(n, t, c), d.clip_min, d.clip_max);
        d.mask.set(n, t, c, true);
      }

  Matrix flow(N, N);
  for (std::size_t u = 0; u < N; ++u)
    for (std::size_t v = 0; v < N; ++v)
      if (u != v) flow(u, v) = std::round(1000.0 * w(u, v)) + 10.0 + static_cast<double>(rng.below(40));

  nlohmann::json weights = nlohmann::json::array();
  for (std::size_t u = 0; u < N; ++u) weights.push_back(std::vector<double>(w.row(u).begin(), w.row(u).end()));
  out.ground_truth = {{"generator", "stpn-synthetic"},
                      {"seed", o.seed},
                      {"airports", N},
                      {"days", o.days},
                      {"slots_per_day", td},
                      {"lag_steps", o.lag_steps},
                      {"od_weights", weights},
                      {"mask_fraction", o.mask_fraction},
                      {"weather_shock", o.weather_shock},
                      {"ar_phi", o.ar_phi},
                      {"ar_sigma", o.ar_sigma},
                      {"noise_sigma", o.noise_sigma}};
  if (!o.od_weights) {
    out.ground_truth["source"] = out.airports[o.source].code;
    out.ground_truth["sink"] = out.airports[o.sink].code;
  }
  out.delays = std::move(d);
  out.covariates = std::move(cov);
  out.flow = std::move(flow);
  out.od_weights = std::move(w);
  return out;
}

Dataset synthetic_dataset(const SyntheticData& data) {
  Dataset ds = assemble_dataset(data.airports, data.delays, data.covariates, data.weather, data.flow);
  ds.metadata = {{"source", "synthetic"}, {"ground_truth", data.ground_truth}};
  return ds;
}

double lagged_correlation(const DelayTensor& delays, std::size_t node_a, std::size_t channel_a,
                          std::size_t node_b, std::size_t channel_b, std::size_t lag) {
  double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  std::size_t n = 0;
  for (std::size_t t = 0; t + lag < delays.steps(); ++t) {
    if (!delays.mask(node_a, t, channel_a) || !delays.mask(node_b, t + lag, channel_b)) continue;
    const double a = delays.values(node_a, t, channel_a);
    const double b = delays.values(node_b, t + lag, channel_b);
    sa += a;
    sb += b;
    saa += a * a;
    sbb += b * b;
    sab += a * b;
    ++n;
  }
  if (n < 2) return 0.0;
  const double m = static_cast<double>(n);
  const double cov = sab / m - (sa / m) * (sb / m);
  const double va = saa / m - (sa / m) * (sa / m);
  const double vb = sbb / m - (sb / m) * (sb / m);
  return va > 0 && vb > 0 ? cov / std::sqrt(va * vb) : 0.0;
}

}  // namespace stpn
