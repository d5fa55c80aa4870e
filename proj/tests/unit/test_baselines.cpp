#include <doctest.h>

#include "stpn/baselines.hpp"
#include "support.hpp"

using namespace stpn;
using namespace stpn::testing;

namespace {

/// Two nodes over `days` days starting on a Monday, every cell observed.
DelayTensor blank(std::size_t days, double fill = 0.0) {
  DelayTensor d;
  d.timeline = Timeline{day_number(make_timestamp(2024, 1, 1)), days, OperatingWindow{}};
  d.values = Tensor3(2, d.timeline.size(), 2, fill);
  d.mask = Mask3(2, d.timeline.size(), 2, true);
  return d;
}

}  // namespace

TEST_SUITE("baselines") {

TEST_CASE("weekly slot index") {
  const Timeline tl{day_number(make_timestamp(2024, 1, 1)), 14, OperatingWindow{}};
  CHECK(weekly_slot(tl, 0) == 0);
  CHECK(weekly_slot(tl, 37) == 36 + 1);
  CHECK(weekly_slot(tl, 7 * 36 + 5) == 5);
}

TEST_CASE("historical average of a constant series is that constant") {
  const DelayTensor d = blank(14, 7.5);
  const auto ha = HistoricalAverage::fit(d, 0, d.steps());
  CHECK(ha.period() == 7 * 36);
  const Tensor3 y = ha.predict(d.timeline, 100, 12);
  for (double v : y.values()) CHECK(v == 7.5);
}

TEST_CASE("historical average averages the same weekly slot") {
  DelayTensor d = blank(14);
  // Slot 3 on both Mondays.
  d.values(0, 3, kArrival) = 10.0;
  d.values(0, 7 * 36 + 3, kArrival) = 20.0;
  const auto ha = HistoricalAverage::fit(d, 0, d.steps());
  CHECK(ha.slot_value(0, 3, kArrival) == 15.0);
  // A third Monday falls on the same slot of the cycle.
  const Timeline longer{d.timeline.first_day, 21, d.timeline.window};
  CHECK(ha.predict(longer, 14 * 36 + 3, 1)(0, 0, kArrival) == 15.0);
}

TEST_CASE("historical average skips unobserved cells and falls back to the channel mean") {
  DelayTensor d = blank(7);
  Rng rng(61);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t t = 0; t < d.steps(); ++t)
      for (std::size_t c = 0; c < 2; ++c) d.values(n, t, c) = rng.uniform(-20, 20);
  d.mask.set(1, 40, kDeparture, false);
  d.values(1, 40, kDeparture) = 1e9;
  const auto ha = HistoricalAverage::fit(d, 0, d.steps());
  CHECK_FALSE(ha.slot_observed(1, 40, kDeparture));

  double s = 0.0;
  std::size_t count = 0;
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t t = 0; t < d.steps(); ++t)
      if (d.mask(n, t, kDeparture)) {
        s += d.values(n, t, kDeparture);
        ++count;
      }
  CHECK(ha.channel_mean()[kDeparture] == doctest::Approx(s / count).epsilon(1e-12));
  CHECK(ha.slot_value(1, 40, kDeparture) == doctest::Approx(s / count).epsilon(1e-12));
  CHECK(ha.slot_value(1, 41, kDeparture) == d.values(1, 41, kDeparture));
}

TEST_CASE("historical average ignores values outside the training range") {
  DelayTensor d = blank(14, 3.0);
  for (std::size_t t = 7 * 36; t < d.steps(); ++t) d.values(0, t, 0) = 100.0;
  const auto ha = HistoricalAverage::fit(d, 0, 7 * 36);
  CHECK(ha.slot_value(0, 5, 0) == 3.0);
}

TEST_CASE("VAR on a constant series") {
  const DelayTensor d = blank(4, -4.0);
  const VarModel m = var_fit(d, 0, d.steps(), 3);
  CHECK(m.lag == 3);
  CHECK(m.dim == 4);
  REQUIRE(m.coef.size() == 3);
  for (double c : m.intercept) CHECK(c == doctest::Approx(-4.0).epsilon(1e-9));
  for (const auto& b : m.coef)
    for (double v : b.values()) CHECK(std::abs(v) < 1e-9);
  const Tensor3 y = var_predict(m, Tensor3(2, 12, 2, -4.0), Mask3(2, 12, 2, true), 5);
  for (double v : y.values()) CHECK(v == doctest::Approx(-4.0).epsilon(1e-9));
}

TEST_CASE("VAR one-step forecast is c + sum of lag matrices times history") {
  Rng rng(62);
  DelayTensor d = blank(6);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t t = 0; t < d.steps(); ++t)
      for (std::size_t c = 0; c < 2; ++c) d.values(n, t, c) = rng.normal(0, 5);
  const VarModel m = var_fit(d, 0, d.steps(), 2);
  const Tensor3 x = random_tensor(rng, 2, 4, 2, -10, 10);
  const Tensor3 y = var_predict(m, x, Mask3(2, 4, 2, true), 1);
  auto vec = [&](std::size_t t) {
    std::vector<double> v(4);
    for (std::size_t i = 0; i < 4; ++i) v[i] = x(i / 2, t, i % 2);
    return v;
  };
  const std::vector<double> x1 = vec(3), x2 = vec(2);
  for (std::size_t i = 0; i < 4; ++i) {
    double e = m.intercept[i];
    for (std::size_t j = 0; j < 4; ++j) e += m.coef[0](i, j) * x1[j] + m.coef[1](i, j) * x2[j];
    CHECK(y(i / 2, 0, i % 2) == doctest::Approx(e).epsilon(1e-12));
  }
}

TEST_CASE("VAR least squares matches the normal equations") {
  Rng rng(63);
  DelayTensor d = blank(5);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t t = 0; t < d.steps(); ++t)
      for (std::size_t c = 0; c < 2; ++c) d.values(n, t, c) = rng.normal(0, 3);
  const VarModel m = var_fit(d, 0, d.steps(), 1);
  CHECK_FALSE(m.ridge);
  // Residuals of the fitted model are orthogonal to the regressors and sum to zero.
  std::vector<double> sum_r(4, 0.0);
  std::vector<std::vector<double>> cross(4, std::vector<double>(4, 0.0));
  for (std::size_t t = 1; t < d.steps(); ++t) {
    std::vector<double> prev(4), cur(4);
    for (std::size_t i = 0; i < 4; ++i) {
      prev[i] = d.values(i / 2, t - 1, i % 2);
      cur[i] = d.values(i / 2, t, i % 2);
    }
    const auto pred = m.step({prev});
    for (std::size_t i = 0; i < 4; ++i) {
      const double r = cur[i] - pred[i];
      sum_r[i] += r;
      for (std::size_t j = 0; j < 4; ++j) cross[i][j] += r * prev[j];
    }
  }
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(std::abs(sum_r[i]) < 1e-8);
    for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(cross[i][j]) < 1e-7);
  }
}

TEST_CASE("VAR rejects lags the window cannot supply") {
  const DelayTensor d = blank(3, 1.0);
  const VarModel m = var_fit(d, 0, d.steps(), 12);
  CHECK_THROWS_AS(var_predict(m, Tensor3(2, 6, 2), Mask3(2, 6, 2, true), 3), ShapeError);
  CHECK_NOTHROW(var_predict(m, Tensor3(2, 12, 2), Mask3(2, 12, 2, true), 3));
  CHECK_THROWS(var_fit(d, 0, d.steps(), 0));
  CHECK_THROWS(var_fit(d, 0, 10, 12));
  CHECK_THROWS_AS(var_predict(m, Tensor3(3, 12, 2), Mask3(3, 12, 2, true), 3), ShapeError);
}

TEST_CASE("VAR fills unobserved history with the training channel mean") {
  Rng rng(64);
  DelayTensor d = blank(5);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t t = 0; t < d.steps(); ++t)
      for (std::size_t c = 0; c < 2; ++c) d.values(n, t, c) = rng.normal(c == 0 ? 3 : -2, 4);
  const VarModel m = var_fit(d, 0, d.steps(), 1);
  Tensor3 x = random_tensor(rng, 2, 3, 2);
  Mask3 mask(2, 3, 2, true);
  mask.set(1, 2, kDeparture, false);
  x(1, 2, kDeparture) = 1e6;
  Tensor3 filled = x;
  filled(1, 2, kDeparture) = m.fill[kDeparture];
  CHECK(var_predict(m, x, mask, 2) == var_predict(m, filled, Mask3(2, 3, 2, true), 2));
}

TEST_CASE("VAR metadata") {
  const DelayTensor d = blank(3, 1.0);
  const VarModel m = var_fit(d, 0, d.steps(), 2);
  const auto j = m.metadata();
  CHECK(j.at("lag") == 2);
  CHECK(j.at("dim") == 4);
  CHECK(j.at("rows") == d.steps() - 2);
  CHECK(j.at("ridge") == true);  // constant series leaves a zero design
}

}  // TEST_SUITE
