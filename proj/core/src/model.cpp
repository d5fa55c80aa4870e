#include "stpn/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "stpn/random.hpp"

namespace stpn {

std::size_t ModelConfig::se_width(std::size_t channels) const {
  return std::max<std::size_t>(1, channels / se_reduction);
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("model config: " + m); };
  if (h < 1 || p < 1) fail("h and p must be >= 1");
  if (relations < 1) fail("need at least one relation");
  if (order < 0) fail("diffusion order must be >= 0");
  if (orders() == 0) fail("order 0 without the identity term leaves no diffusion terms");
  if (heads < 1) fail("heads must be >= 1");
  if (key_dim < 1) fail("key_dim must be positive");
  if (key_dim % heads != 0) fail("key_dim must be divisible by heads");
  if (pos_dim < 1) fail("pos_dim must be >= 1");
  if (weather_categories < 1) fail("weather_categories must be >= 1");
  if (hidden_widths.empty()) fail("hidden_widths must not be empty");
  for (auto w : hidden_widths)
    if (w < 1) fail("hidden widths must be >= 1");
  if (se_reduction < 1) fail("se_reduction must be >= 1");
  if (slots_per_day < 1) fail("slots_per_day must be >= 1");
  if (!(l_pos_init > 0.0)) fail("l_pos_init must be positive");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"nodes", nodes},
          {"h", h},
          {"p", p},
          {"relations", relations},
          {"order", order},
          {"include_identity", include_identity},
          {"heads", heads},
          {"pos_dim", pos_dim},
          {"key_dim", key_dim},
          {"weather_categories", weather_categories},
          {"weather_embed_dim", weather_embed_dim},
          {"hidden_widths", hidden_widths},
          {"se_reduction", se_reduction},
          {"slots_per_day", slots_per_day},
          {"l_pos_init", l_pos_init}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.nodes = j.at("nodes").get<std::size_t>();
  c.h = j.at("h").get<std::size_t>();
  c.p = j.at("p").get<std::size_t>();
  c.relations = j.at("relations").get<std::size_t>();
  c.order = j.at("order").get<int>();
  c.include_identity = j.at("include_identity").get<bool>();
  c.heads = j.at("heads").get<std::size_t>();
  c.pos_dim = j.at("pos_dim").get<std::size_t>();
  c.key_dim = j.at("key_dim").get<std::size_t>();
  c.weather_categories = j.at("weather_categories").get<std::size_t>();
  c.weather_embed_dim = j.at("weather_embed_dim").get<std::size_t>();
  c.hidden_widths = j.at("hidden_widths").get<std::vector<std::size_t>>();
  c.se_reduction = j.at("se_reduction").get<std::size_t>();
  c.slots_per_day = j.at("slots_per_day").get<std::size_t>();
  c.l_pos_init = j.at("l_pos_init").get<double>();
  c.validate();
  return c;
}

namespace {

std::string layer_prefix(std::size_t l, bool output) {
  return output ? std::string("output") : "layer" + std::to_string(l);
}

std::string weight_name(const std::string& prefix, std::size_t q, std::size_t k, std::size_t i) {
  return prefix + "/w/q" + std::to_string(q) + "_k" + std::to_string(k) + "_h" + std::to_string(i);
}

// He-uniform: sqrt(6 / fan_in) bounds keep variance through a rectifier.
const double kRectifierGain = std::sqrt(6.0);

struct Spec {
  std::string name;
  std::size_t rows, cols;
  enum Kind { weight, zero, constant, embed } kind;
  double fan_in_or_value;
  /// Weights are uniform in +-gain/sqrt(fan_in).
  double gain = 1.0;
};

// Every parameter in creation order; init_params and check_params share it.
std::vector<Spec> param_specs(const ModelConfig& c) {
  std::vector<Spec> s;
  s.push_back({"weather_embedding", c.weather_categories, c.weather_embed_dim, Spec::embed, 0.1});
  s.push_back({"l_pos", 1, 1, Spec::constant, c.l_pos_init});
  const std::size_t layers = c.hidden_widths.size() + 1;
  std::size_t c_in = c.input_channels();
  for (std::size_t l = 0; l < layers; ++l) {
    const bool output = l + 1 == layers;
    const std::size_t c_out = output ? 2 : c.hidden_widths[l];
    const std::string pre = layer_prefix(l, output);
    s.push_back({pre + "/attn/w_q", c.pos_dim, c.key_dim, Spec::weight, double(c.pos_dim)});
    s.push_back({pre + "/attn/w_k", c.pos_dim, c.key_dim, Spec::weight, double(c.pos_dim)});
    const double fan = double(c.terms() * c.heads * c_in);
    // Near-uniform attention at init averages the h input steps; the output
    // layer gets sqrt(h) back so a white-noise input is not flattened.
    const double gain = output ? kRectifierGain * std::sqrt(double(c.h)) : kRectifierGain;
    const std::size_t k0 = c.include_identity ? 0 : 1;
    for (std::size_t q = 0; q < c.relations; ++q)
      for (std::size_t k = k0; k <= static_cast<std::size_t>(c.order); ++k)
        for (std::size_t i = 0; i < c.heads; ++i)
          s.push_back({weight_name(pre, q, k, i), c_in, c_out, Spec::weight, fan, gain});
    s.push_back({pre + "/bias", 1, c_out, Spec::zero, 0});
    if (!output) {
      if (c_in != c_out)
        s.push_back({pre + "/residual", c_in, c_out, Spec::weight, double(c_in), kRectifierGain});
      s.push_back({pre + "/prelu", 1, 1, Spec::constant, 0.25});
      const std::size_t r = c.se_width(c_out);
      s.push_back({pre + "/se/w_squeeze", r, c_out, Spec::weight, double(c_out), kRectifierGain});
      s.push_back({pre + "/se/b_squeeze", r, 1, Spec::zero, 0});
      s.push_back({pre + "/se/w_excite", c_out, r, Spec::weight, double(r), kRectifierGain});
      s.push_back({pre + "/se/b_excite", c_out, 1, Spec::zero, 0});
    }
    c_in = c_out;
  }
  return s;
}

}  // namespace

ad::ParamStore init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  ad::ParamStore store;
  for (const auto& s : param_specs(config)) {
    Matrix m(s.rows, s.cols);
    switch (s.kind) {
      case Spec::weight: {
        const double a = s.gain / std::sqrt(s.fan_in_or_value);
        for (double& v : m.values()) v = rng.uniform(-a, a);
        break;
      }
      case Spec::embed:
        for (double& v : m.values()) v = rng.uniform(-s.fan_in_or_value, s.fan_in_or_value);
        break;
      case Spec::constant:
        for (double& v : m.values()) v = s.fan_in_or_value;
        break;
      case Spec::zero:
        break;
    }
    store.add(s.name, std::move(m));
  }
  return store;
}

std::string param_signature(const ad::ParamStore& params) {
  std::ostringstream os;
  for (const auto& p : params) os << p.name << ":" << ad::shape_string(p.value) << "\n";
  return os.str();
}

void check_params(const ModelConfig& config, const ad::ParamStore& params) {
  std::ostringstream expected;
  bool ok = true;
  const auto specs = param_specs(config);
  for (const auto& s : specs) {
    expected << s.name << ":" << s.rows << "x" << s.cols << "\n";
    const auto* p = params.find(s.name);
    const auto* m = p ? std::get_if<Matrix>(&p->value) : nullptr;
    if (!m || m->rows() != s.rows || m->cols() != s.cols) ok = false;
  }
  if (params.size() != specs.size()) ok = false;
  if (!ok) {
    throw ShapeError("parameters do not match the model config\nexpected:\n" + expected.str() +
                     "found:\n" + param_signature(params));
  }
}

ad::Var temporal_attention(ad::Var p_in, ad::Var p_out, ad::Var w_q, ad::Var w_k,
                           std::size_t head, std::size_t heads, std::size_t key_dim) {
  if (key_dim == 0) throw std::invalid_argument("temporal_attention: key_dim must be positive");
  const std::size_t width = key_dim / heads;
  ad::Var q = ad::slice_cols(ad::matmul(p_out, w_q), head * width, width);
  ad::Var k = ad::slice_cols(ad::matmul(p_in, w_k), head * width, width);
  ad::Var logits = ad::scale(ad::matmul(q, ad::transpose(k)), 1.0 / std::sqrt(double(key_dim)));
  return ad::transpose(ad::softmax_rows(logits));
}

ad::Var separable_conv(ad::Tape& tape, ad::Var h, std::span<const DiffusionTerm> supports,
                       std::span<const ad::Var> temporal, std::span<const ad::Var> weights) {
  if (weights.size() != supports.size() * temporal.size()) {
    throw std::invalid_argument("separable_conv: " + std::to_string(weights.size()) +
                                " weights for " + std::to_string(supports.size()) + " terms x " +
                                std::to_string(temporal.size()) + " heads");
  }
  std::vector<ad::Var> parts;
  parts.reserve(weights.size());
  for (std::size_t s = 0; s < supports.size(); ++s) {
    ad::Var g = supports[s].identity ? h
                                     : ad::mode_product(h, tape.constant(supports[s].matrix), Mode::space);
    for (std::size_t i = 0; i < temporal.size(); ++i) {
      ad::Var y = ad::mode_product(g, temporal[i], Mode::time);
      parts.push_back(ad::mode_product(y, weights[s * temporal.size() + i], Mode::feature));
    }
  }
  return parts.size() == 1 ? parts.front() : ad::add_n(parts);
}

ad::Var se_block(ad::Var h, ad::Var w_sq, ad::Var b_sq, ad::Var w_ex, ad::Var b_ex, Matrix* gates) {
  ad::Var z = ad::channel_mean(h);
  ad::Var squeezed = ad::relu(ad::add(ad::matmul(w_sq, z), b_sq));
  ad::Var s = ad::sigmoid(ad::add(ad::matmul(w_ex, squeezed), b_ex));
  if (gates) *gates = s.matrix();
  return ad::channel_scale(h, s);
}

ForwardResult forward(ad::Tape& tape, const ModelConfig& c, const ad::ParamStore& params,
                      std::span<const DiffusionTerm> supports, const ModelInput& in,
                      bool track_params) {
  if (!in.x) throw std::invalid_argument("forward: missing input tensor");
  const Tensor3& x = *in.x;
  const std::size_t N = x.nodes();
  if (x.steps() != c.h || x.channels() != 2) {
    throw ShapeError("forward: input " + x.shape_string() + ", expected (N, " + std::to_string(c.h) +
                     ", 2)");
  }
  if (in.weather.size() != N * c.h) throw ShapeError("forward: weather codes must be N x h");
  if (in.pos_in.size() != c.h || in.pos_out.size() != c.p)
    throw ShapeError("forward: positions must have h and p entries");
  if (supports.size() != c.terms()) {
    throw std::invalid_argument("forward: graph supplies " + std::to_string(supports.size()) +
                                " diffusion terms, config expects " + std::to_string(c.terms()));
  }
  for (const auto& s : supports)
    if (s.matrix.rows() != N) throw ShapeError("forward: graph size does not match input nodes");
  for (int code : in.weather)
    if (code < 0 || static_cast<std::size_t>(code) >= c.weather_categories)
      throw std::invalid_argument("forward: weather code " + std::to_string(code) + " out of range");

  auto P = [&](const std::string& name) {
    const ad::Param& p = params.at(name);
    return track_params ? tape.param(p) : tape.constant_ref(p.value);
  };

  ForwardResult result;
  ad::Var hcur = ad::concat_channels(tape.constant(x),
                                     ad::embedding(P("weather_embedding"), in.weather, N, c.h));
  ad::Var l_pos = P("l_pos");
  ad::Var p_in = ad::positional_encoding(l_pos, in.pos_in, c.pos_dim);
  ad::Var p_out = ad::positional_encoding(l_pos, in.pos_out, c.pos_dim);

  const std::size_t layers = c.hidden_widths.size() + 1;
  const std::size_t k0 = c.include_identity ? 0 : 1;
  std::size_t c_in = c.input_channels();
  for (std::size_t l = 0; l < layers; ++l) {
    const bool output = l + 1 == layers;
    const std::size_t c_out = output ? 2 : c.hidden_widths[l];
    const std::string pre = layer_prefix(l, output);
    ad::Var w_q = P(pre + "/attn/w_q"), w_k = P(pre + "/attn/w_k");
    std::vector<ad::Var> temporal;
    std::vector<Matrix> maps;
    for (std::size_t i = 0; i < c.heads; ++i) {
      temporal.push_back(temporal_attention(p_in, output ? p_out : p_in, w_q, w_k, i, c.heads, c.key_dim));
      maps.push_back(temporal.back().matrix());
    }
    result.attention.layers.push_back(std::move(maps));

    std::vector<ad::Var> weights;
    for (std::size_t q = 0; q < c.relations; ++q)
      for (std::size_t k = k0; k <= static_cast<std::size_t>(c.order); ++k)
        for (std::size_t i = 0; i < c.heads; ++i) weights.push_back(P(weight_name(pre, q, k, i)));
    ad::Var conv = ad::add_channel_bias(separable_conv(tape, hcur, supports, temporal, weights),
                                        P(pre + "/bias"));
    if (output) {
      hcur = conv;
    } else {
      ad::Var skip = c_in == c_out ? hcur : ad::mode_product(hcur, P(pre + "/residual"), Mode::feature);
      ad::Var act = ad::prelu(ad::add(conv, skip), P(pre + "/prelu"));
      hcur = se_block(act, P(pre + "/se/w_squeeze"), P(pre + "/se/b_squeeze"),
                      P(pre + "/se/w_excite"), P(pre + "/se/b_excite"));
    }
    c_in = c_out;
  }
  result.output = hcur;
  return result;
}

Tensor3 predict(const ModelConfig& config, const ad::ParamStore& params,
                std::span<const DiffusionTerm> supports, const ModelInput& input,
                AttentionMaps* attention) {
  ad::Tape tape;
  auto r = forward(tape, config, params, supports, input, false);
  if (attention) *attention = std::move(r.attention);
  return r.output.tensor();
}

}  // namespace stpn
