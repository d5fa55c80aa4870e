#include "stpn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace stpn {

const char* to_string(Mode mode) {
  switch (mode) {
    case Mode::space: return "space";
    case Mode::time: return "time";
    case Mode::feature: return "feature";
  }
  return "?";
}

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  if (data_.size() != rows * cols) {
    throw ShapeError("matrix " + std::to_string(rows) + "x" + std::to_string(cols) +
                     " needs " + std::to_string(rows * cols) + " values, got " +
                     std::to_string(data_.size()));
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() ? rows.begin()->size() : 0) {
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

std::string Matrix::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

Tensor3::Tensor3(std::size_t nodes, std::size_t steps, std::size_t channels, double fill)
    : nodes_(nodes), steps_(steps), channels_(channels), data_(nodes * steps * channels, fill) {}

Tensor3::Tensor3(std::size_t nodes, std::size_t steps, std::size_t channels,
                 std::vector<double> values)
    : nodes_(nodes), steps_(steps), channels_(channels), data_(std::move(values)) {
  if (data_.size() != nodes * steps * channels) {
    throw ShapeError("tensor " + std::to_string(nodes) + "x" + std::to_string(steps) + "x" +
                     std::to_string(channels) + " needs " +
                     std::to_string(nodes * steps * channels) + " values, got " +
                     std::to_string(data_.size()));
  }
}

std::size_t Tensor3::extent(Mode mode) const {
  switch (mode) {
    case Mode::space: return nodes_;
    case Mode::time: return steps_;
    case Mode::feature: return channels_;
  }
  return 0;
}

std::string Tensor3::shape_string() const {
  return "(" + std::to_string(nodes_) + "," + std::to_string(steps_) + "," +
         std::to_string(channels_) + ")";
}

Mask3::Mask3(std::size_t nodes, std::size_t steps, std::size_t channels, bool fill)
    : nodes_(nodes), steps_(steps), channels_(channels),
      data_(nodes * steps * channels, fill ? 1 : 0) {}

std::size_t Mask3::count() const {
  return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + a.shape_string() + " times " + b.shape_string() +
                     " (inner extents " + std::to_string(a.cols()) + " vs " +
                     std::to_string(b.rows()) + ")");
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto b_row = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

Matrix kronecker(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) {
      const double aij = a(i, j);
      for (std::size_t k = 0; k < b.rows(); ++k)
        for (std::size_t l = 0; l < b.cols(); ++l)
          out(i * b.rows() + k, j * b.cols() + l) = aij * b(k, l);
    }
  return out;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw ShapeError("add: " + a.shape_string() + " vs " + b.shape_string());
  Matrix out = a;
  auto o = out.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
  return out;
}

Matrix operator*(double s, const Matrix& a) {
  Matrix out = a;
  for (double& v : out.values()) v *= s;
  return out;
}

Tensor3 mode_product(const Tensor3& x, const Matrix& u, Mode mode) {
  const std::size_t extent = x.extent(mode);
  if (u.rows() != extent) {
    throw ShapeError(std::string("mode_product(") + to_string(mode) + "): tensor extent " +
                     std::to_string(extent) + " does not match matrix rows " +
                     std::to_string(u.rows()) + " (tensor " + x.shape_string() + ", matrix " +
                     u.shape_string() + ")");
  }
  const std::size_t N = x.nodes(), T = x.steps(), C = x.channels();
  const auto in = x.values();
  switch (mode) {
    case Mode::space: {
      const std::size_t J = u.cols(), slab = T * C;
      Tensor3 out(J, T, C);
      auto o = out.values();
      for (std::size_t i = 0; i < N; ++i) {
        const double* src = in.data() + i * slab;
        for (std::size_t j = 0; j < J; ++j) {
          const double w = u(i, j);
          if (w == 0.0) continue;
          double* dst = o.data() + j * slab;
          for (std::size_t k = 0; k < slab; ++k) dst[k] += w * src[k];
        }
      }
      return out;
    }
    case Mode::time: {
      const std::size_t S = u.cols();
      Tensor3 out(N, S, C);
      auto o = out.values();
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t t = 0; t < T; ++t) {
          const double* src = in.data() + (n * T + t) * C;
          for (std::size_t s = 0; s < S; ++s) {
            const double w = u(t, s);
            if (w == 0.0) continue;
            double* dst = o.data() + (n * S + s) * C;
            for (std::size_t c = 0; c < C; ++c) dst[c] += w * src[c];
          }
        }
      return out;
    }
    case Mode::feature: {
      const std::size_t D = u.cols();
      Tensor3 out(N, T, D);
      auto o = out.values();
      for (std::size_t r = 0; r < N * T; ++r) {
        const double* src = in.data() + r * C;
        double* dst = o.data() + r * D;
        for (std::size_t c = 0; c < C; ++c) {
          const double xv = src[c];
          if (xv == 0.0) continue;
          auto urow = u.row(c);
          for (std::size_t d = 0; d < D; ++d) dst[d] += xv * urow[d];
        }
      }
      return out;
    }
  }
  return {};
}

Matrix mode_outer(const Tensor3& a, const Tensor3& b, Mode mode) {
  auto check = [&](bool ok) {
    if (!ok)
      throw ShapeError(std::string("mode_outer(") + to_string(mode) + "): " + a.shape_string() +
                       " vs " + b.shape_string());
  };
  const auto av = a.values();
  const auto bv = b.values();
  switch (mode) {
    case Mode::space: {
      check(a.steps() == b.steps() && a.channels() == b.channels());
      const std::size_t slab = a.steps() * a.channels();
      Matrix out(a.nodes(), b.nodes());
      for (std::size_t i = 0; i < a.nodes(); ++i)
        for (std::size_t j = 0; j < b.nodes(); ++j) {
          double acc = 0.0;
          const double* pa = av.data() + i * slab;
          const double* pb = bv.data() + j * slab;
          for (std::size_t k = 0; k < slab; ++k) acc += pa[k] * pb[k];
          out(i, j) = acc;
        }
      return out;
    }
    case Mode::time: {
      check(a.nodes() == b.nodes() && a.channels() == b.channels());
      const std::size_t C = a.channels(), Ta = a.steps(), Tb = b.steps();
      Matrix out(Ta, Tb);
      for (std::size_t n = 0; n < a.nodes(); ++n)
        for (std::size_t t = 0; t < Ta; ++t) {
          const double* pa = av.data() + (n * Ta + t) * C;
          for (std::size_t s = 0; s < Tb; ++s) {
            const double* pb = bv.data() + (n * Tb + s) * C;
            double acc = 0.0;
            for (std::size_t c = 0; c < C; ++c) acc += pa[c] * pb[c];
            out(t, s) += acc;
          }
        }
      return out;
    }
    case Mode::feature: {
      check(a.nodes() == b.nodes() && a.steps() == b.steps());
      const std::size_t Ca = a.channels(), Cb = b.channels();
      Matrix out(Ca, Cb);
      for (std::size_t r = 0; r < a.nodes() * a.steps(); ++r) {
        const double* pa = av.data() + r * Ca;
        const double* pb = bv.data() + r * Cb;
        for (std::size_t i = 0; i < Ca; ++i) {
          const double ai = pa[i];
          if (ai == 0.0) continue;
          auto orow = out.row(i);
          for (std::size_t j = 0; j < Cb; ++j) orow[j] += ai * pb[j];
        }
      }
      return out;
    }
  }
  return {};
}

Matrix unfold(const Tensor3& x) {
  auto v = x.values();
  return Matrix(x.nodes() * x.steps(), x.channels(), std::vector<double>(v.begin(), v.end()));
}

Tensor3 refold(const Matrix& m, std::size_t nodes, std::size_t steps) {
  if (m.rows() != nodes * steps) {
    throw ShapeError("refold: matrix has " + std::to_string(m.rows()) + " rows, expected " +
                     std::to_string(nodes * steps));
  }
  auto v = m.values();
  return Tensor3(nodes, steps, m.cols(), std::vector<double>(v.begin(), v.end()));
}

Matrix as_column(std::span<const double> values) {
  return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("max_abs_diff: size mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace stpn
