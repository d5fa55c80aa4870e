#pragma once

// The propagation network: learnable positional encoding, multi-head
// temporal attention, space-time separable multi-graph diffusion layers
// with residual/PReLU/SE wiring, and the future-query output layer.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stpn/autodiff.hpp"
#include "stpn/graph.hpp"
#include "stpn/tensor.hpp"

namespace stpn {

struct ModelConfig {
  std::size_t nodes = 70;  // informational; parameters do not depend on it
  std::size_t h = 12;
  std::size_t p = 12;
  std::size_t relations = 3;
  int order = 2;
  bool include_identity = true;
  std::size_t heads = 4;
  std::size_t pos_dim = 16;
  std::size_t key_dim = 32;
  std::size_t weather_categories = 8;
  std::size_t weather_embed_dim = 4;
  std::vector<std::size_t> hidden_widths{128, 64, 32};
  std::size_t se_reduction = 16;
  std::size_t slots_per_day = 36;
  double l_pos_init = 10000.0;

  /// Diffusion terms per relation.
  std::size_t orders() const { return static_cast<std::size_t>(order) + (include_identity ? 1 : 0); }
  std::size_t terms() const { return relations * orders(); }
  std::size_t input_channels() const { return 2 + weather_embed_dim; }
  std::size_t se_width(std::size_t channels) const;
  void validate() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

/// Per-layer, per-head temporal maps; the last entry is the output layer.
/// Each matrix is T_in x T_out with columns summing to 1.
struct AttentionMaps {
  std::vector<std::vector<Matrix>> layers;
};

/// Creates every parameter with its initial value. Attention projections are
/// uniform in +-1/sqrt(fan_in); diffusion, residual and SE weights in
/// +-sqrt(6/fan_in), with an extra sqrt(h) on the output layer. Biases start
/// at 0, PReLU slopes at 0.25, the embedding table uniform in +-0.1.
ad::ParamStore init_params(const ModelConfig& config, std::uint64_t seed);

/// "name:rows x cols" lines for the parameters a config implies.
std::string param_signature(const ad::ParamStore& params);
/// Throws ShapeError naming both signatures unless `params` has exactly the
/// names and shapes `config` requires.
void check_params(const ModelConfig& config, const ad::ParamStore& params);

struct ModelInput {
  const Tensor3* x = nullptr;  // N x h x 2, normalized, masked cells 0
  std::span<const int> weather;  // N x h codes
  std::span<const int> pos_in;   // h slot-of-day indices
  std::span<const int> pos_out;  // p slot-of-day indices
};

struct ForwardResult {
  ad::Var output;  // N x p x 2
  AttentionMaps attention;
};

/// Records the forward pass on `tape`. With `track_params` false the
/// parameters enter as constants (inference, no gradients).
ForwardResult forward(ad::Tape& tape, const ModelConfig& config, const ad::ParamStore& params,
                      std::span<const DiffusionTerm> supports, const ModelInput& input,
                      bool track_params = true);

/// Inference convenience: normalized N x p x 2 predictions.
Tensor3 predict(const ModelConfig& config, const ad::ParamStore& params,
                std::span<const DiffusionTerm> supports, const ModelInput& input,
                AttentionMaps* attention = nullptr);

// Building blocks, exposed for tests.

/// T_in x T_out map for one head: softmax over input steps of
/// (P_out W_Q)(P_in W_K)^T / sqrt(key_dim), transposed.
ad::Var temporal_attention(ad::Var p_in, ad::Var p_out, ad::Var w_q, ad::Var w_k,
                           std::size_t head, std::size_t heads, std::size_t key_dim);

/// sum over terms and heads of H x_S A_term x_T A_head x_F W[term * heads + head].
ad::Var separable_conv(ad::Tape& tape, ad::Var h, std::span<const DiffusionTerm> supports,
                       std::span<const ad::Var> temporal, std::span<const ad::Var> weights);

/// H scaled per channel by sigmoid(W_ex relu(W_sq z + b_sq) + b_ex), where z is
/// the channel mean over nodes and steps.
ad::Var se_block(ad::Var h, ad::Var w_sq, ad::Var b_sq, ad::Var w_ex, ad::Var b_ex,
                 Matrix* gates = nullptr);

}  // namespace stpn
