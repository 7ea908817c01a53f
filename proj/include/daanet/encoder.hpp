#pragma once

#include "daanet/tape.hpp"

#include <optional>
#include <random>
#include <vector>

namespace daanet {

struct EncoderConfig {
  Index d_model = 300;
  int lstm_layers = 3;
  int heads = 4;
  Index d_attn = 300;
  bool bidirectional = true;
  bool causal = false;  // causal implies not bidirectional
  bool use_lstm = true;
  bool use_selfattn = true;

  Index ffn_hidden() const { return std::min<Index>(4 * d_model, 512); }
  /// Encoder output width: d_model per enabled block, concatenated.
  Index d_enc() const {
    return d_model * (1 + (use_lstm ? 1 : 0) + (use_selfattn ? 1 : 0));
  }
  void validate() const;
};

struct LstmDirParams {
  ParamPtr Wx;  // d_in x 4H, gate order (input, forget, cell, output)
  ParamPtr Wh;  // H x 4H
  ParamPtr b;   // 1 x 4H
};

struct LstmLayerParams {
  LstmDirParams fwd;
  std::optional<LstmDirParams> bwd;
};

struct EncoderParams {
  EncoderConfig cfg;
  ParamPtr ffn_W_in, ffn_b_in, ffn_W_out, ffn_b_out;
  std::vector<LstmLayerParams> lstm;
  ParamPtr attn_R;  // d_model x d_attn, sliced per head
  ParamPtr ln_ffn_gain, ln_ffn_bias;
  ParamPtr ln_lstm_gain, ln_lstm_bias;
  ParamPtr ln_attn_gain, ln_attn_bias;
};

inline constexpr Scalar kLayerNormEps = 1e-6;

/// L x L additive mask admitting positions j <= i; entries are 0 or the
/// masked-logit sentinel.
Matrix causal_mask(Index length);

/// (x - mean) / sqrt(var + eps) per row, then elementwise gain and bias.
ad::Var layer_normalize(ad::Var x, ad::Var gain, ad::Var bias,
                        Scalar eps = kLayerNormEps);

/// Single-direction LSTM over the rows of inputs, zero initial state, forget
/// gate order per LstmDirParams. reversed runs right-to-left and restores row
/// order on output.
ad::Var lstm_sequence(ad::Tape& tape, ad::Var inputs, const LstmDirParams& dir,
                      bool reversed);

/// Multi-head self-attention: per head h, softmax((X R_h)(X R_h)^T / sqrt(d_h)
/// + mask) applied to the matching feature slice of X.
ad::Var self_attention(ad::Var x, ad::Var R, int heads, const Matrix* mask);

struct DropoutPlan {
  Scalar keep = 1.0;
  bool active = false;
  std::mt19937_64* rng = nullptr;
};

/// Runs the enabled blocks (feed-forward, stacked LSTM, self-attention) on the
/// embedded rows, layer norm after each, dropout when the plan is active, and
/// concatenates block outputs to n x d_enc.
ad::Var encode(ad::Tape& tape, const EncoderParams& params, ad::Var embedded,
               const DropoutPlan& dropout = {});

/// Bidirectional variant used for the observed context.
ad::Var encode_context(ad::Tape& tape, const EncoderParams& params, ad::Var embedded,
                       const DropoutPlan& dropout = {});

/// Causal variant: row t depends only on rows <= t.
ad::Var encode_autoregressive(ad::Tape& tape, const EncoderParams& params,
                              ad::Var embedded, const DropoutPlan& dropout = {});

}  // namespace daanet
