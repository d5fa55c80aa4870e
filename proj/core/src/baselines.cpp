#include "stpn/baselines.hpp"

#include <algorithm>
#include <stdexcept>

#include <Eigen/Dense>

namespace stpn {

std::size_t weekly_slot(const Timeline& timeline, std::size_t index) {
  return static_cast<std::size_t>(iso_weekday(timeline.at(index))) * timeline.window.slots_per_day() +
         timeline.slot_in_day(index);
}

HistoricalAverage HistoricalAverage::fit(const DelayTensor& d, std::size_t begin, std::size_t end) {
  end = std::min(end, d.steps());
  HistoricalAverage ha;
  ha.nodes_ = d.nodes();
  ha.slots_per_day_ = d.slots_per_day();
  ha.period_ = 7 * ha.slots_per_day_;
  ha.table_ = Tensor3(ha.nodes_, ha.period_, kDelayChannels);
  ha.observed_ = Mask3(ha.nodes_, ha.period_, kDelayChannels);

  // Values are sorted per slot before summing so the result does not depend
  // on the order in which weeks are visited.
  std::vector<std::vector<double>> cells(ha.nodes_ * ha.period_ * kDelayChannels);
  std::array<std::vector<double>, kDelayChannels> all;
  for (std::size_t t = begin; t < end; ++t) {
    const std::size_t w = weekly_slot(d.timeline, t);
    for (std::size_t n = 0; n < ha.nodes_; ++n)
      for (std::size_t c = 0; c < kDelayChannels; ++c)
        if (d.mask(n, t, c)) {
          cells[ha.table_.index(n, w, c)].push_back(d.values(n, t, c));
          all[c].push_back(d.values(n, t, c));
        }
  }
  auto mean = [](std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  for (std::size_t c = 0; c < kDelayChannels; ++c) ha.channel_mean_[c] = all[c].empty() ? 0.0 : mean(all[c]);
  for (std::size_t n = 0; n < ha.nodes_; ++n)
    for (std::size_t w = 0; w < ha.period_; ++w)
      for (std::size_t c = 0; c < kDelayChannels; ++c) {
        auto& v = cells[ha.table_.index(n, w, c)];
        if (v.empty()) {
          ha.table_(n, w, c) = ha.channel_mean_[c];
        } else {
          ha.table_(n, w, c) = mean(v);
          ha.observed_.set(n, w, c, true);
        }
      }
  return ha;
}

Tensor3 HistoricalAverage::predict(const Timeline& timeline, std::size_t first, std::size_t p) const {
  if (timeline.window.slots_per_day() != slots_per_day_)
    throw std::invalid_argument("historical average: timeline has a different daily slot count");
  Tensor3 out(nodes_, p, kDelayChannels);
  for (std::size_t s = 0; s < p; ++s) {
    const std::size_t w = weekly_slot(timeline, first + s);
    for (std::size_t n = 0; n < nodes_; ++n)
      for (std::size_t c = 0; c < kDelayChannels; ++c) out(n, s, c) = table_(n, w, c);
  }
  return out;
}

double HistoricalAverage::slot_value(std::size_t node, std::size_t w, std::size_t c) const {
  return table_(node, w, c);
}

bool HistoricalAverage::slot_observed(std::size_t node, std::size_t w, std::size_t c) const {
  return observed_(node, w, c);
}

// -- VAR ------------------------------------------------------------------------

std::vector<double> VarModel::step(const std::vector<std::vector<double>>& history) const {
  if (history.size() < lag) throw std::invalid_argument("var step: history shorter than the lag");
  std::vector<double> y = intercept;
  for (std::size_t l = 1; l <= lag; ++l) {
    const auto& x = history[history.size() - l];
    if (x.size() != dim) throw ShapeError("var step: history vector has the wrong size");
    const Matrix& b = coef[l - 1];
    for (std::size_t i = 0; i < dim; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < dim; ++j) s += b(i, j) * x[j];
      y[i] += s;
    }
  }
  return y;
}

nlohmann::json VarModel::metadata() const {
  return {{"lag", lag}, {"dim", dim}, {"rows", rows}, {"ridge", ridge}, {"ridge_lambda", ridge_lambda}};
}

VarModel var_fit(const DelayTensor& d, std::size_t begin, std::size_t end, std::size_t lag) {
  if (lag < 1) throw std::invalid_argument("var_fit: lag must be >= 1");
  end = std::min(end, d.steps());
  if (end < begin + lag + 2) throw std::invalid_argument("var_fit: training range too short for the lag");
  const std::size_t N = d.nodes(), dim = N * kDelayChannels;

  VarModel m;
  m.lag = lag;
  m.dim = dim;
  for (std::size_t c = 0; c < kDelayChannels; ++c) {
    double s = 0.0;
    std::size_t count = 0;
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t t = begin; t < end; ++t)
        if (d.mask(n, t, c)) {
          s += d.values(n, t, c);
          ++count;
        }
    m.fill[c] = count ? s / static_cast<double>(count) : 0.0;
  }
  const std::size_t T = end - begin;
  Eigen::MatrixXd series(T, dim);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < kDelayChannels; ++c)
        series(t, n * kDelayChannels + c) =
            d.mask(n, begin + t, c) ? d.values(n, begin + t, c) : m.fill[c];

  const std::size_t rows = T - lag, cols = lag * dim;
  Eigen::MatrixXd Z(rows, cols), Y(rows, dim);
  for (std::size_t r = 0; r < rows; ++r) {
    Y.row(r) = series.row(r + lag);
    for (std::size_t l = 1; l <= lag; ++l) Z.block(r, (l - 1) * dim, 1, dim) = series.row(r + lag - l);
  }
  // Centring absorbs the intercept, so a constant series yields B = 0.
  const Eigen::RowVectorXd zbar = Z.colwise().mean(), ybar = Y.colwise().mean();
  Z.rowwise() -= zbar;
  Y.rowwise() -= ybar;

  Eigen::MatrixXd B;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Z);
  if (static_cast<std::size_t>(qr.rank()) == cols) {
    B = qr.solve(Y);
  } else {
    m.ridge = true;
    m.ridge_lambda = 1e-6;
    Eigen::MatrixXd G = Z.transpose() * Z;
    G.diagonal().array() += m.ridge_lambda;
    B = G.ldlt().solve(Z.transpose() * Y);
  }
  const Eigen::RowVectorXd c = ybar - zbar * B;
  m.rows = rows;
  m.intercept.assign(c.data(), c.data() + dim);
  for (std::size_t l = 0; l < lag; ++l) {
    Matrix b(dim, dim);
    // B stacks lag blocks as (lag * dim) x dim acting on row vectors.
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t j = 0; j < dim; ++j) b(i, j) = B(l * dim + j, i);
    m.coef.push_back(std::move(b));
  }
  return m;
}

Tensor3 var_predict(const VarModel& m, const Tensor3& input, const Mask3& mask, std::size_t p) {
  const std::size_t N = input.nodes();
  if (N * kDelayChannels != m.dim || input.channels() != kDelayChannels || !mask.matches(input))
    throw ShapeError("var_predict: input " + input.shape_string() + " does not match the model");
  if (input.steps() < m.lag)
    throw ShapeError("var_predict: window of " + std::to_string(input.steps()) +
                     " steps is shorter than the lag " + std::to_string(m.lag));
  std::vector<std::vector<double>> hist;
  for (std::size_t t = input.steps() - m.lag; t < input.steps(); ++t) {
    std::vector<double> x(m.dim);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < kDelayChannels; ++c)
        x[n * kDelayChannels + c] = mask(n, t, c) ? input(n, t, c) : m.fill[c];
    hist.push_back(std::move(x));
  }
  Tensor3 out(N, p, kDelayChannels);
  for (std::size_t s = 0; s < p; ++s) {
    auto y = m.step(hist);
    for (std::size_t i = 0; i < m.dim; ++i) out(i / kDelayChannels, s, i % kDelayChannels) = y[i];
    hist.push_back(std::move(y));
  }
  return out;
}

}  // namespace stpn
