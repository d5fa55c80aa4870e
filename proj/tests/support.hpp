#pragma once

// Fixtures and independent reference computations shared by the unit and
// acceptance tests. Nothing here calls the library routine it is used to
// check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "stpn/autodiff.hpp"
#include "stpn/graph.hpp"
#include "stpn/model.hpp"
#include "stpn/random.hpp"
#include "stpn/tensor.hpp"

namespace stpn::testing {

inline Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
  Matrix m(r, c);
  for (auto& v : m.values()) v = rng.uniform(lo, hi);
  return m;
}

inline Tensor3 random_tensor(Rng& rng, std::size_t n, std::size_t t, std::size_t c, double lo = -1.0,
                             double hi = 1.0) {
  Tensor3 x(n, t, c);
  for (auto& v : x.values()) v = rng.uniform(lo, hi);
  return x;
}

/// Non-negative with roughly a third of the entries zeroed.
inline Matrix random_adjacency(Rng& rng, std::size_t n) {
  Matrix a(n, n);
  for (auto& v : a.values()) v = rng.bernoulli(0.35) ? 0.0 : rng.uniform(0.0, 1.0);
  return a;
}

inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      long double s = 0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += static_cast<long double>(a(i, k)) * b(k, j);
      c(i, j) = static_cast<double>(s);
    }
  return c;
}

inline Matrix naive_transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

/// (A kron B)((i*p + k), (j*q + l)) = A(i, j) B(k, l).
inline Matrix naive_kron(const Matrix& a, const Matrix& b) {
  Matrix k(a.rows() * b.rows(), a.cols() * b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      for (std::size_t r = 0; r < b.rows(); ++r)
        for (std::size_t c = 0; c < b.cols(); ++c) k(i * b.rows() + r, j * b.cols() + c) = a(i, j) * b(r, c);
  return k;
}

/// Rows (n, t) in node-major order, channels as columns.
inline Matrix naive_unfold(const Tensor3& x) {
  Matrix m(x.nodes() * x.steps(), x.channels());
  for (std::size_t n = 0; n < x.nodes(); ++n)
    for (std::size_t t = 0; t < x.steps(); ++t)
      for (std::size_t c = 0; c < x.channels(); ++c) m(n * x.steps() + t, c) = x(n, t, c);
  return m;
}

inline Matrix row_normalized(const Matrix& a) {
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j);
    for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = s > 0.0 ? a(i, j) / s : 0.0;
  }
  return out;
}

inline double max_abs_difference(std::span<const double> a, std::span<const double> b) {
  double m = a.size() == b.size() ? 0.0 : INFINITY;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// The small network used for gradient and property checks.
inline ModelConfig tiny_config() {
  ModelConfig c;
  c.nodes = 5;
  c.h = 6;
  c.p = 3;
  c.relations = 3;
  c.order = 1;
  c.include_identity = true;
  c.heads = 2;
  c.pos_dim = 4;
  c.key_dim = 4;
  c.weather_categories = 3;
  c.weather_embed_dim = 2;
  c.hidden_widths = {8, 4};
  c.se_reduction = 2;
  c.slots_per_day = 36;
  return c;
}

inline MultiGraph random_graph(Rng& rng, std::size_t n, std::size_t relations = 3) {
  MultiGraph g;
  for (std::size_t i = 0; i < n; ++i)
    g.airports.push_back({"A" + std::to_string(i), rng.uniform(25, 48), rng.uniform(-120, -70)});
  const RelationKind kinds[] = {RelationKind::distance, RelationKind::od, RelationKind::do_};
  for (std::size_t q = 0; q < relations; ++q) g.relations.push_back({kinds[q % 3], random_adjacency(rng, n)});
  return g;
}

struct WindowInput {
  Tensor3 x;
  std::vector<int> weather;
  std::vector<int> pos_in;
  std::vector<int> pos_out;

  ModelInput input() const { return {&x, weather, pos_in, pos_out}; }
};

inline WindowInput random_window(Rng& rng, const ModelConfig& c, std::size_t nodes) {
  WindowInput w{random_tensor(rng, nodes, c.h, 2), {}, {}, {}};
  for (std::size_t i = 0; i < nodes * c.h; ++i)
    w.weather.push_back(static_cast<int>(rng.below(c.weather_categories)));
  const auto first = static_cast<int>(rng.below(c.slots_per_day));
  for (std::size_t t = 0; t < c.h; ++t) w.pos_in.push_back(static_cast<int>((first + t) % c.slots_per_day));
  for (std::size_t t = 0; t < c.p; ++t) w.pos_out.push_back(static_cast<int>((first + c.h + t) % c.slots_per_day));
  return w;
}

}  // namespace stpn::testing
