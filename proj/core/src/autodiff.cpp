#include "stpn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace stpn::ad {

std::span<const double> flat(const Value& v) {
  return std::visit([](const auto& x) { return x.values(); }, v);
}

std::span<double> flat(Value& v) {
  return std::visit([](auto& x) { return x.values(); }, v);
}

Value zeros_like(const Value& v) {
  if (const auto* m = std::get_if<Matrix>(&v)) return Matrix(m->rows(), m->cols());
  const auto& t = std::get<Tensor3>(v);
  return Tensor3(t.nodes(), t.steps(), t.channels());
}

std::string shape_string(const Value& v) {
  return std::visit([](const auto& x) { return x.shape_string(); }, v);
}

bool same_shape(const Value& a, const Value& b) {
  if (a.index() != b.index()) return false;
  if (const auto* m = std::get_if<Matrix>(&a)) return m->same_shape(std::get<Matrix>(b));
  return std::get<Tensor3>(a).same_shape(std::get<Tensor3>(b));
}

// -- ParamStore -------------------------------------------------------------

Param& ParamStore::add(std::string name, Value value) {
  if (index_.contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  Value grad = zeros_like(value);
  index_.emplace(name, params_.size());
  params_.push_back(Param{std::move(name), std::move(value), std::move(grad)});
  return params_.back();
}

Param* ParamStore::find(std::string_view name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

const Param* ParamStore::find(std::string_view name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

Param& ParamStore::at(std::string_view name) {
  if (auto* p = find(name)) return *p;
  throw std::out_of_range("unknown parameter: " + std::string(name));
}

const Param& ParamStore::at(std::string_view name) const {
  if (const auto* p = find(name)) return *p;
  throw std::out_of_range("unknown parameter: " + std::string(name));
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += flat(p.value).size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) std::ranges::fill(flat(p.grad), 0.0);
}

// -- Var / Gradients ----------------------------------------------------------

const Value& Var::value() const { return tape_->value(id_); }
const Matrix& Var::matrix() const { return std::get<Matrix>(value()); }
const Tensor3& Var::tensor() const { return std::get<Tensor3>(value()); }

double Var::scalar() const {
  const auto& m = matrix();
  if (m.rows() != 1 || m.cols() != 1) throw ShapeError("not a scalar: " + m.shape_string());
  return m(0, 0);
}

const Value* Gradients::find(const Param& p) const {
  auto it = grads_.find(&p);
  return it == grads_.end() ? nullptr : &it->second;
}

void Gradients::add(const Param& p, const Value& g) {
  auto [it, inserted] = grads_.try_emplace(&p, g);
  if (!inserted) {
    auto dst = flat(it->second);
    auto src = flat(g);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
}

void assign_grads(ParamStore& store, const Gradients& grads) {
  for (auto& p : store) {
    if (const Value* g = grads.find(p)) {
      p.grad = *g;
    } else {
      p.grad = zeros_like(p.value);
    }
  }
}

// -- Tape -------------------------------------------------------------------

Var Tape::constant(Value v) {
  nodes_.push_back(Node{std::move(v), nullptr, nullptr, false, {}, std::nullopt});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant_ref(const Value& v) {
  nodes_.push_back(Node{Matrix{}, &v, nullptr, false, {}, std::nullopt});
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(const Param& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  nodes_.push_back(Node{Matrix{}, &p.value, &p, true, {}, std::nullopt});
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Value v, std::span<const Var> inputs, Backprop backprop) {
  bool needs = false;
  for (const Var& in : inputs) {
    if (in.tape() != this) throw std::invalid_argument("variable belongs to a different tape");
    needs = needs || nodes_[in.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(v), nullptr, nullptr, needs,
                        needs ? std::move(backprop) : Backprop{}, std::nullopt});
  return Var(this, nodes_.size() - 1);
}

const Value& Tape::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.ref ? *n.ref : n.owned;
}

Value& Tape::grad_slot(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.grad) n.grad = zeros_like(value(id));
  return *n.grad;
}

Gradients Tape::backward(Var loss) {
  if (loss.tape() != this) throw std::invalid_argument("loss belongs to a different tape");
  const auto* m = std::get_if<Matrix>(&value(loss.id()));
  if (!m || m->rows() != 1 || m->cols() != 1) {
    throw ShapeError("backward requires a scalar loss, got " + shape_string(value(loss.id())));
  }
  for (auto& n : nodes_) n.grad.reset();
  Gradients out;
  if (!nodes_[loss.id()].requires_grad) return out;
  grad_slot(loss.id()) = Matrix(1, 1, 1.0);
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.grad || !n.requires_grad) continue;
    if (n.param) {
      out.add(*n.param, *n.grad);
    } else if (n.backprop) {
      n.backprop(*this, *n.grad);
    }
  }
  for (auto& n : nodes_) n.grad.reset();
  return out;
}

// -- ops ----------------------------------------------------------------------

namespace {

void accumulate(Tape& t, const Var& v, const Value& g, double s = 1.0) {
  if (!t.requires_grad(v.id())) return;
  auto dst = flat(t.grad_slot(v.id()));
  auto src = flat(g);
  if (s == 1.0) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  } else {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += s * src[i];
  }
}

bool needs(Tape& t, const Var& v) { return t.requires_grad(v.id()); }

void check_same(const Var& a, const Var& b, const char* op) {
  if (!same_shape(a.value(), b.value())) {
    throw ShapeError(std::string(op) + ": shape " + shape_string(a.value()) + " vs " +
                     shape_string(b.value()));
  }
}

template <class F, class DF>
Var unary(Var a, F f, DF df) {
  Value out = a.value();
  for (double& v : flat(out)) v = f(v);
  Tape* t = a.tape();
  Value y = out;
  return t->record(std::move(out), {a}, [a, df, y = std::move(y)](Tape& tape, const Value& g) {
    Value ga = zeros_like(g);
    auto dst = flat(ga);
    auto gv = flat(g);
    auto xv = flat(tape.value(a.id()));
    auto yv = flat(y);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = gv[i] * df(xv[i], yv[i]);
    accumulate(tape, a, ga);
  });
}

const Matrix& mat(const Var& v, const char* op) {
  if (const auto* m = std::get_if<Matrix>(&v.value())) return *m;
  throw ShapeError(std::string(op) + ": expected a matrix, got tensor " + shape_string(v.value()));
}

const Tensor3& ten(const Var& v, const char* op) {
  if (const auto* t = std::get_if<Tensor3>(&v.value())) return *t;
  throw ShapeError(std::string(op) + ": expected a tensor, got matrix " + shape_string(v.value()));
}

}  // namespace

Var add(Var a, Var b) {
  check_same(a, b, "add");
  Value out = a.value();
  auto o = flat(out);
  auto bv = flat(b.value());
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, const Value& g) {
    accumulate(t, a, g);
    accumulate(t, b, g);
  });
}

Var add_n(std::span<const Var> terms) {
  if (terms.empty()) throw std::invalid_argument("add_n: no terms");
  Tape* tape = terms.front().tape();
  Value out = terms.front().value();
  auto o = flat(out);
  for (std::size_t k = 1; k < terms.size(); ++k) {
    check_same(terms.front(), terms[k], "add_n");
    auto src = flat(terms[k].value());
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += src[i];
  }
  std::vector<Var> ins(terms.begin(), terms.end());
  return tape->record(std::move(out), terms, [ins = std::move(ins)](Tape& t, const Value& g) {
    for (const Var& v : ins) accumulate(t, v, g);
  });
}

Var sub(Var a, Var b) {
  check_same(a, b, "sub");
  Value out = a.value();
  auto o = flat(out);
  auto bv = flat(b.value());
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, const Value& g) {
    accumulate(t, a, g);
    accumulate(t, b, g, -1.0);
  });
}

Var scale(Var a, double s) {
  Value out = a.value();
  for (double& v : flat(out)) v *= s;
  return a.tape()->record(std::move(out), {a},
                          [a, s](Tape& t, const Value& g) { accumulate(t, a, g, s); });
}

Var hadamard(Var a, Var b) {
  check_same(a, b, "hadamard");
  Value out = a.value();
  auto o = flat(out);
  auto bv = flat(b.value());
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, const Value& g) {
    auto gv = flat(g);
    if (needs(t, a)) {
      Value ga = t.value(b.id());
      auto d = flat(ga);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] *= gv[i];
      accumulate(t, a, ga);
    }
    if (needs(t, b)) {
      Value gb = t.value(a.id());
      auto d = flat(gb);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] *= gv[i];
      accumulate(t, b, gb);
    }
  });
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : flat(a.value())) s += v;
  return a.tape()->record(Matrix(1, 1, s), {a}, [a](Tape& t, const Value& g) {
    const double gv = std::get<Matrix>(g)(0, 0);
    auto dst = flat(t.grad_slot(a.id()));
    for (double& d : dst) d += gv;
  });
}

Var sqrt(Var a) {
  // The derivative at exactly zero is taken as 0 (a perfect fit has no
  // preferred descent direction).
  return unary(
      a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Var sigmoid(Var a) {
  return unary(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var prelu(Var x, Var slope) {
  const double s = slope.scalar();
  Value out = x.value();
  for (double& v : flat(out))
    if (v < 0.0) v *= s;
  return x.tape()->record(std::move(out), {x, slope}, [x, slope](Tape& t, const Value& g) {
    const double s = std::get<Matrix>(t.value(slope.id()))(0, 0);
    auto gv = flat(g);
    auto xv = flat(t.value(x.id()));
    if (needs(t, x)) {
      Value gx = zeros_like(g);
      auto d = flat(gx);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = xv[i] < 0.0 ? s * gv[i] : gv[i];
      accumulate(t, x, gx);
    }
    if (needs(t, slope)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < xv.size(); ++i)
        if (xv[i] < 0.0) acc += xv[i] * gv[i];
      std::get<Matrix>(t.grad_slot(slope.id()))(0, 0) += acc;
    }
  });
}

Var matmul(Var a, Var b) {
  Matrix out = stpn::matmul(mat(a, "matmul"), mat(b, "matmul"));
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, const Value& g) {
    const Matrix& gm = std::get<Matrix>(g);
    if (needs(t, a)) accumulate(t, a, stpn::matmul(gm, std::get<Matrix>(t.value(b.id())).transposed()));
    if (needs(t, b)) accumulate(t, b, stpn::matmul(std::get<Matrix>(t.value(a.id())).transposed(), gm));
  });
}

Var transpose(Var a) {
  Matrix out = mat(a, "transpose").transposed();
  return a.tape()->record(std::move(out), {a}, [a](Tape& t, const Value& g) {
    accumulate(t, a, std::get<Matrix>(g).transposed());
  });
}

Var softmax_rows(Var m) {
  Matrix out = mat(m, "softmax_rows");
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    const double mx = *std::ranges::max_element(r);
    double z = 0.0;
    for (double& v : r) {
      v = std::exp(v - mx);
      z += v;
    }
    for (double& v : r) v /= z;
  }
  Matrix y = out;
  return m.tape()->record(std::move(out), {m}, [m, y = std::move(y)](Tape& t, const Value& g) {
    const Matrix& gm = std::get<Matrix>(g);
    Matrix gx(y.rows(), y.cols());
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) dot += gm(i, j) * y(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) gx(i, j) = y(i, j) * (gm(i, j) - dot);
    }
    accumulate(t, m, gx);
  });
}

Var slice_cols(Var m, std::size_t begin, std::size_t count) {
  const Matrix& src = mat(m, "slice_cols");
  if (begin + count > src.cols()) {
    throw ShapeError("slice_cols: columns [" + std::to_string(begin) + "," +
                     std::to_string(begin + count) + ") of " + src.shape_string());
  }
  Matrix out(src.rows(), count);
  for (std::size_t i = 0; i < src.rows(); ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = src(i, begin + j);
  return m.tape()->record(std::move(out), {m}, [m, begin, count](Tape& t, const Value& g) {
    const Matrix& gm = std::get<Matrix>(g);
    auto& dst = std::get<Matrix>(t.grad_slot(m.id()));
    for (std::size_t i = 0; i < gm.rows(); ++i)
      for (std::size_t j = 0; j < count; ++j) dst(i, begin + j) += gm(i, j);
  });
}

Var mode_product(Var x, Var u, Mode mode) {
  Tensor3 out = stpn::mode_product(ten(x, "mode_product"), mat(u, "mode_product"), mode);
  return x.tape()->record(std::move(out), {x, u}, [x, u, mode](Tape& t, const Value& g) {
    const Tensor3& gt = std::get<Tensor3>(g);
    if (needs(t, x))
      accumulate(t, x, stpn::mode_product(gt, std::get<Matrix>(t.value(u.id())).transposed(), mode));
    if (needs(t, u))
      accumulate(t, u, stpn::mode_outer(std::get<Tensor3>(t.value(x.id())), gt, mode));
  });
}

Var add_channel_bias(Var x, Var bias) {
  const Tensor3& xt = ten(x, "add_channel_bias");
  const Matrix& b = mat(bias, "add_channel_bias");
  if (b.rows() != 1 || b.cols() != xt.channels()) {
    throw ShapeError("add_channel_bias: bias " + b.shape_string() + " for tensor " +
                     xt.shape_string());
  }
  Tensor3 out = xt;
  const std::size_t C = xt.channels();
  auto o = out.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += b(0, i % C);
  return x.tape()->record(std::move(out), {x, bias}, [x, bias, C](Tape& t, const Value& g) {
    accumulate(t, x, g);
    if (needs(t, bias)) {
      auto& gb = std::get<Matrix>(t.grad_slot(bias.id()));
      auto gv = flat(g);
      for (std::size_t i = 0; i < gv.size(); ++i) gb(0, i % C) += gv[i];
    }
  });
}

Var channel_mean(Var x) {
  const Tensor3& xt = ten(x, "channel_mean");
  const std::size_t C = xt.channels();
  const double inv = 1.0 / static_cast<double>(xt.nodes() * xt.steps());
  Matrix out(C, 1);
  auto xv = xt.values();
  for (std::size_t i = 0; i < xv.size(); ++i) out(i % C, 0) += xv[i];
  for (double& v : out.values()) v *= inv;
  return x.tape()->record(std::move(out), {x}, [x, C, inv](Tape& t, const Value& g) {
    const Matrix& gm = std::get<Matrix>(g);
    auto dst = flat(t.grad_slot(x.id()));
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += gm(i % C, 0) * inv;
  });
}

Var channel_scale(Var x, Var s) {
  const Tensor3& xt = ten(x, "channel_scale");
  const Matrix& sm = mat(s, "channel_scale");
  const std::size_t C = xt.channels();
  if (sm.rows() != C || sm.cols() != 1) {
    throw ShapeError("channel_scale: gate " + sm.shape_string() + " for tensor " + xt.shape_string());
  }
  Tensor3 out = xt;
  auto o = out.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= sm(i % C, 0);
  return x.tape()->record(std::move(out), {x, s}, [x, s, C](Tape& t, const Value& g) {
    auto gv = flat(g);
    const Matrix& sm = std::get<Matrix>(t.value(s.id()));
    if (needs(t, x)) {
      auto dst = flat(t.grad_slot(x.id()));
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += gv[i] * sm(i % C, 0);
    }
    if (needs(t, s)) {
      auto xv = flat(t.value(x.id()));
      auto& gs = std::get<Matrix>(t.grad_slot(s.id()));
      for (std::size_t i = 0; i < xv.size(); ++i) gs(i % C, 0) += gv[i] * xv[i];
    }
  });
}

Var concat_channels(Var a, Var b) {
  const Tensor3& at = ten(a, "concat_channels");
  const Tensor3& bt = ten(b, "concat_channels");
  if (at.nodes() != bt.nodes() || at.steps() != bt.steps()) {
    throw ShapeError("concat_channels: " + at.shape_string() + " vs " + bt.shape_string());
  }
  const std::size_t Ca = at.channels(), Cb = bt.channels(), rows = at.nodes() * at.steps();
  Tensor3 out(at.nodes(), at.steps(), Ca + Cb);
  auto o = out.values();
  auto av = at.values();
  auto bv = bt.values();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(av.data() + r * Ca, Ca, o.data() + r * (Ca + Cb));
    std::copy_n(bv.data() + r * Cb, Cb, o.data() + r * (Ca + Cb) + Ca);
  }
  return a.tape()->record(std::move(out), {a, b}, [a, b, Ca, Cb, rows](Tape& t, const Value& g) {
    auto gv = flat(g);
    if (needs(t, a)) {
      auto d = flat(t.grad_slot(a.id()));
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < Ca; ++c) d[r * Ca + c] += gv[r * (Ca + Cb) + c];
    }
    if (needs(t, b)) {
      auto d = flat(t.grad_slot(b.id()));
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < Cb; ++c) d[r * Cb + c] += gv[r * (Ca + Cb) + Ca + c];
    }
  });
}

Var embedding(Var table, std::span<const int> codes, std::size_t nodes, std::size_t steps) {
  const Matrix& tab = mat(table, "embedding");
  if (codes.size() != nodes * steps) {
    throw ShapeError("embedding: " + std::to_string(codes.size()) + " codes for " +
                     std::to_string(nodes) + "x" + std::to_string(steps));
  }
  const std::size_t E = tab.cols();
  Tensor3 out(nodes, steps, E);
  auto o = out.values();
  for (std::size_t r = 0; r < codes.size(); ++r) {
    const int c = codes[r];
    if (c < 0 || static_cast<std::size_t>(c) >= tab.rows()) {
      throw std::out_of_range("embedding: category " + std::to_string(c) + " outside [0," +
                              std::to_string(tab.rows()) + ")");
    }
    auto src = tab.row(static_cast<std::size_t>(c));
    std::copy(src.begin(), src.end(), o.begin() + static_cast<std::ptrdiff_t>(r * E));
  }
  std::vector<int> idx(codes.begin(), codes.end());
  return table.tape()->record(std::move(out), {table},
                              [table, idx = std::move(idx), E](Tape& t, const Value& g) {
                                auto gv = flat(g);
                                auto& gt = std::get<Matrix>(t.grad_slot(table.id()));
                                for (std::size_t r = 0; r < idx.size(); ++r)
                                  for (std::size_t e = 0; e < E; ++e)
                                    gt(static_cast<std::size_t>(idx[r]), e) += gv[r * E + e];
                              });
}

Var positional_encoding(Var scale, std::span<const int> positions, std::size_t dim) {
  const double L = scale.scalar();
  if (!(L > 0.0)) throw std::invalid_argument("positional_encoding: scale must be positive");
  const std::size_t T = positions.size();
  Matrix out(T, dim);
  for (std::size_t r = 0; r < T; ++r)
    for (std::size_t e = 0; e < dim; ++e) {
      const double expo = static_cast<double>(2 * (e / 2)) / static_cast<double>(dim);
      const double angle = positions[r] / std::pow(L, expo);
      out(r, e) = (e % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  std::vector<int> pos(positions.begin(), positions.end());
  return scale.tape()->record(
      std::move(out), {scale}, [scale, pos = std::move(pos), dim](Tape& t, const Value& g) {
        const Matrix& gm = std::get<Matrix>(g);
        const double L = std::get<Matrix>(t.value(scale.id()))(0, 0);
        double acc = 0.0;
        for (std::size_t r = 0; r < pos.size(); ++r)
          for (std::size_t e = 0; e < dim; ++e) {
            const double expo = static_cast<double>(2 * (e / 2)) / static_cast<double>(dim);
            const double angle = pos[r] / std::pow(L, expo);
            // d(angle)/dL = -expo * angle / L
            const double dangle = -expo * angle / L;
            const double d = (e % 2 == 0) ? std::cos(angle) : -std::sin(angle);
            acc += gm(r, e) * d * dangle;
          }
        std::get<Matrix>(t.grad_slot(scale.id()))(0, 0) += acc;
      });
}

Var masked_sse(Var pred, const Tensor3& target, const Mask3& mask) {
  const Tensor3& p = ten(pred, "masked_sse");
  if (!p.same_shape(target) || !mask.matches(target)) {
    throw ShapeError("masked_sse: prediction " + p.shape_string() + ", target " +
                     target.shape_string());
  }
  auto pv = p.values();
  auto tv = target.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i)
    if (mask.flat(i)) {
      const double d = pv[i] - tv[i];
      acc += d * d;
    }
  return pred.tape()->record(Matrix(1, 1, acc), {pred},
                             [pred, &target, &mask](Tape& t, const Value& g) {
                               const double gs = std::get<Matrix>(g)(0, 0);
                               auto pv = flat(t.value(pred.id()));
                               auto tv = target.values();
                               auto d = flat(t.grad_slot(pred.id()));
                               for (std::size_t i = 0; i < d.size(); ++i)
                                 if (mask.flat(i)) d[i] += 2.0 * gs * (pv[i] - tv[i]);
                             });
}

MaskedLoss masked_rmse(std::span<const LossTerm> terms) {
  if (terms.empty()) throw std::invalid_argument("masked_rmse: no terms");
  Tape* tape = terms.front().pred.tape();
  std::size_t observed = 0;
  for (const auto& term : terms) observed += term.mask->count();
  if (observed == 0) return {tape->constant(Matrix(1, 1, 0.0)), 0, true};
  std::vector<Var> sse;
  sse.reserve(terms.size());
  for (const auto& term : terms) sse.push_back(masked_sse(term.pred, *term.target, *term.mask));
  Var total = sse.size() == 1 ? sse.front() : add_n(sse);
  return {sqrt(scale(total, 1.0 / static_cast<double>(observed))), observed, false};
}

MaskedLoss masked_rmse(Var pred, const Tensor3& target, const Mask3& mask) {
  const LossTerm term{pred, &target, &mask};
  return masked_rmse(std::span<const LossTerm>(&term, 1));
}

// -- Adam -----------------------------------------------------------------------

void Adam::step(ParamStore& params) {
  double norm2 = 0.0;
  for (const auto& p : params) {
    auto g = flat(p.grad);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g[i])) {
        std::ostringstream os;
        os << "non-finite gradient in parameter '" << p.name << "' at flat index " << i
           << " (value " << g[i] << ") at step " << step_ + 1;
        throw NonFiniteError(os.str());
      }
      norm2 += g[i] * g[i];
    }
  }
  double clip = 1.0;
  if (options_.clip_norm > 0.0) {
    const double norm = std::sqrt(norm2);
    if (norm > options_.clip_norm) clip = options_.clip_norm / norm;
  }

  ++step_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (auto& p : params) {
    auto [it, inserted] = moments_.try_emplace(p.name, Moments{zeros_like(p.value), zeros_like(p.value)});
    auto m = flat(it->second.first);
    auto v = flat(it->second.second);
    if (m.size() != flat(p.value).size()) {
      throw ShapeError("Adam moments for '" + p.name + "' do not match parameter shape");
    }
    auto w = flat(p.value);
    auto g = flat(p.grad);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = clip * g[i];
      m[i] = b1 * m[i] + (1.0 - b1) * gi;
      v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] -= options_.lr * mhat / (std::sqrt(vhat) + options_.eps);
    }
  }
}

void Adam::restore(std::uint64_t step, std::map<std::string, Moments> moments) {
  step_ = step;
  moments_ = std::move(moments);
}

}  // namespace stpn::ad
