#pragma once

// Dense 64-bit matrices and (node, time, channel) tensors with the mode
// products, unfoldings and Kronecker products used by the space-time
// separable convolution.

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace stpn {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Mode { space, time, feature };

const char* to_string(Mode mode);

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  Matrix transposed() const;
  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  std::string shape_string() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Row-major (node, time, channel) tensor. Channel is the fastest index,
/// node the slowest; this is also the vectorization order used by `unfold`.
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(std::size_t nodes, std::size_t steps, std::size_t channels, double fill = 0.0);
  Tensor3(std::size_t nodes, std::size_t steps, std::size_t channels, std::vector<double> values);

  std::size_t nodes() const { return nodes_; }
  std::size_t steps() const { return steps_; }
  std::size_t channels() const { return channels_; }
  std::size_t extent(Mode mode) const;
  std::size_t size() const { return data_.size(); }

  std::size_t index(std::size_t n, std::size_t t, std::size_t c) const {
    return (n * steps_ + t) * channels_ + c;
  }
  double& operator()(std::size_t n, std::size_t t, std::size_t c) { return data_[index(n, t, c)]; }
  double operator()(std::size_t n, std::size_t t, std::size_t c) const {
    return data_[index(n, t, c)];
  }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool same_shape(const Tensor3& other) const {
    return nodes_ == other.nodes_ && steps_ == other.steps_ && channels_ == other.channels_;
  }
  std::string shape_string() const;

  friend bool operator==(const Tensor3&, const Tensor3&) = default;

 private:
  std::size_t nodes_ = 0;
  std::size_t steps_ = 0;
  std::size_t channels_ = 0;
  std::vector<double> data_;
};

/// Boolean observation mask laid out like Tensor3 (true = observed).
class Mask3 {
 public:
  Mask3() = default;
  Mask3(std::size_t nodes, std::size_t steps, std::size_t channels, bool fill = false);

  std::size_t nodes() const { return nodes_; }
  std::size_t steps() const { return steps_; }
  std::size_t channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }

  bool operator()(std::size_t n, std::size_t t, std::size_t c) const {
    return data_[(n * steps_ + t) * channels_ + c] != 0;
  }
  void set(std::size_t n, std::size_t t, std::size_t c, bool observed) {
    data_[(n * steps_ + t) * channels_ + c] = observed ? 1 : 0;
  }
  bool flat(std::size_t i) const { return data_[i] != 0; }
  std::size_t count() const;
  bool matches(const Tensor3& t) const {
    return nodes_ == t.nodes() && steps_ == t.steps() && channels_ == t.channels();
  }

  friend bool operator==(const Mask3&, const Mask3&) = default;

 private:
  std::size_t nodes_ = 0;
  std::size_t steps_ = 0;
  std::size_t channels_ = 0;
  std::vector<std::uint8_t> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix kronecker(const Matrix& a, const Matrix& b);
Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);

/// Mode-n product contracting over the tensor's extent along `mode`:
/// with mode == time, result(n, j, c) = sum_t x(n, t, c) * u(t, j).
/// `u.rows()` must equal that extent; the result has extent `u.cols()`.
Tensor3 mode_product(const Tensor3& x, const Matrix& u, Mode mode);

/// Contraction of two tensors over every mode except `mode`:
/// result(i, j) = sum over the other indices of a(.., i, ..) * b(.., j, ..).
/// This is the gradient of mode_product with respect to its matrix.
Matrix mode_outer(const Tensor3& a, const Tensor3& b, Mode mode);

/// (N*T) x C matricization; row index n*T + t.
Matrix unfold(const Tensor3& x);
Tensor3 refold(const Matrix& m, std::size_t nodes, std::size_t steps);

/// Row-major flattening of a matrix as a column vector (rows*cols x 1).
Matrix as_column(std::span<const double> values);

bool all_finite(std::span<const double> values);
double max_abs_diff(std::span<const double> a, std::span<const double> b);

}  // namespace stpn
