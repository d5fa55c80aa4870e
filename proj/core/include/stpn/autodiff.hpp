#pragma once

// Tape-based reverse-mode differentiation over the handful of tensor
// operations the model needs, a named parameter store, Adam, and the
// masked RMSE loss.

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "stpn/tensor.hpp"

namespace stpn::ad {

using Value = std::variant<Matrix, Tensor3>;

std::span<const double> flat(const Value& v);
std::span<double> flat(Value& v);
Value zeros_like(const Value& v);
std::string shape_string(const Value& v);
bool same_shape(const Value& a, const Value& b);

struct Param {
  std::string name;
  Value value;
  Value grad;
};

/// Ordered, name-unique collection of parameters. References returned by
/// `add` stay valid for the lifetime of the store.
class ParamStore {
 public:
  Param& add(std::string name, Value value);

  Param* find(std::string_view name);
  const Param* find(std::string_view name) const;
  Param& at(std::string_view name);
  const Param& at(std::string_view name) const;

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  bool empty() const { return params_.empty(); }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();

 private:
  std::deque<Param> params_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

class Tape;

/// Handle to a node on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  const Value& value() const;
  const Matrix& matrix() const;
  const Tensor3& tensor() const;
  double scalar() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// d(loss)/d(param) for every parameter reached during backward.
class Gradients {
 public:
  const Value* find(const Param& p) const;
  void add(const Param& p, const Value& g);
  std::size_t size() const { return grads_.size(); }

 private:
  std::unordered_map<const Param*, Value> grads_;
};

/// Copies gradients into `Param::grad`; parameters absent from `grads`
/// receive zeros.
void assign_grads(ParamStore& store, const Gradients& grads);

class Tape {
 public:
  using Backprop = std::function<void(Tape&, const Value& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Value v);
  /// Records a constant by reference; `v` must outlive the tape.
  Var constant_ref(const Value& v);
  /// One leaf per parameter per tape; repeated calls return the same node.
  Var param(const Param& p);

  /// Appends an op node. `backprop` is dropped when no input needs a
  /// gradient.
  Var record(Value v, std::span<const Var> inputs, Backprop backprop);
  Var record(Value v, std::initializer_list<Var> inputs, Backprop backprop) {
    return record(std::move(v), std::span<const Var>(inputs.begin(), inputs.size()),
                  std::move(backprop));
  }

  const Value& value(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Gradient accumulator for node `id`, zero-initialised on first use.
  Value& grad_slot(std::size_t id);

  /// Reverse sweep from a scalar (1x1) loss. Each node is visited at most
  /// once, in reverse recording order.
  Gradients backward(Var loss);

 private:
  struct Node {
    Value owned;
    const Value* ref = nullptr;
    const Param* param = nullptr;
    bool requires_grad = false;
    Backprop backprop;
    std::optional<Value> grad;
  };
  std::deque<Node> nodes_;
  std::unordered_map<const Param*, std::size_t> param_nodes_;
};

// -- differentiable operations --------------------------------------------

Var add(Var a, Var b);
Var add_n(std::span<const Var> terms);
Var sub(Var a, Var b);
Var scale(Var a, double s);
Var hadamard(Var a, Var b);
Var square(Var a);
Var sum(Var a);
Var sqrt(Var a);
Var sigmoid(Var a);
Var relu(Var a);
/// max(x, 0) + slope * min(x, 0) with a learnable 1x1 slope.
Var prelu(Var x, Var slope);

Var matmul(Var a, Var b);
Var transpose(Var a);
Var softmax_rows(Var m);
Var slice_cols(Var m, std::size_t begin, std::size_t count);

Var mode_product(Var x, Var u, Mode mode);
/// x(n, t, c) + bias(0, c) for a 1 x C bias row.
Var add_channel_bias(Var x, Var bias);
/// C x 1 mean of each channel over nodes and steps.
Var channel_mean(Var x);
/// x(n, t, c) * s(c, 0).
Var channel_scale(Var x, Var s);
Var concat_channels(Var a, Var b);

/// Rows of `table` (categories x dim) gathered into a nodes x steps x dim
/// tensor. `codes` is row-major nodes x steps.
Var embedding(Var table, std::span<const int> codes, std::size_t nodes, std::size_t steps);

/// steps x dim sinusoidal encoding: entry (r, 2i) = sin(pos_r / L^(2i/dim)),
/// entry (r, 2i+1) = cos(pos_r / L^(2i/dim)), differentiable in the 1x1
/// scale L.
Var positional_encoding(Var scale, std::span<const int> positions, std::size_t dim);

/// Sum of squared differences over observed cells. `target` and `mask` are
/// referenced by the tape and must outlive it.
Var masked_sse(Var pred, const Tensor3& target, const Mask3& mask);

struct LossTerm {
  Var pred;
  const Tensor3* target = nullptr;
  const Mask3* mask = nullptr;
};

struct MaskedLoss {
  Var loss;
  std::size_t observed = 0;
  /// True when every cell was masked; `loss` is then a constant 0.
  bool empty = false;
};

/// sqrt(sum of squared errors / number of observed cells), pooled over all
/// terms.
MaskedLoss masked_rmse(std::span<const LossTerm> terms);
MaskedLoss masked_rmse(Var pred, const Tensor3& target, const Mask3& mask);

// -- optimisation ----------------------------------------------------------

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Global gradient-norm clip; 0 disables clipping.
  double clip_norm = 0.0;
};

class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  /// One bias-corrected update using `Param::grad`. Throws NonFiniteError
  /// before touching any parameter if a gradient entry is NaN or Inf.
  void step(ParamStore& params);

  const AdamOptions& options() const { return options_; }
  std::uint64_t steps() const { return step_; }

  struct Moments {
    Value first;
    Value second;
  };
  const std::map<std::string, Moments>& moments() const { return moments_; }
  void restore(std::uint64_t step, std::map<std::string, Moments> moments);

 private:
  AdamOptions options_;
  std::uint64_t step_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace stpn::ad
