#include "daanet/encoder.hpp"

#include <cmath>

namespace daanet {

using ad::Var;

void EncoderConfig::validate() const {
  if (d_model <= 0) throw DataError("encoder: d_model must be positive");
  if (heads <= 0) throw DataError("encoder: heads must be positive");
  if (use_selfattn && d_model % heads != 0)
    throw DataError("encoder: heads must divide d_model");
  if (use_selfattn && d_attn % heads != 0)
    throw DataError("encoder: heads must divide d_attn");
  if (use_lstm && lstm_layers <= 0)
    throw DataError("encoder: lstm_layers must be positive");
  if (use_lstm && bidirectional && d_model % 2 != 0)
    throw DataError("encoder: bidirectional LSTM needs an even d_model");
  if (causal && bidirectional)
    throw DataError("encoder: causal encoder cannot be bidirectional");
}

Matrix causal_mask(Index length) {
  Matrix m = Matrix::Zero(length, length);
  for (Index i = 0; i < length; ++i)
    for (Index j = i + 1; j < length; ++j) m(i, j) = kMaskedLogit;
  return m;
}

Var layer_normalize(Var x, Var gain, Var bias, Scalar eps) {
  Var centered = ad::sub_colvec(x, ad::row_mean(x));
  Var variance = ad::row_mean(ad::mul(centered, centered));
  Var normalized = ad::mul_colvec(centered, ad::rsqrt_shift(variance, eps));
  return ad::add_rowvec(ad::mul_rowvec(normalized, gain), bias);
}

Var lstm_sequence(ad::Tape& tape, Var inputs, const LstmDirParams& dir,
                  bool reversed) {
  const Matrix& X = tape.value(inputs);
  Index T = X.rows();
  Index H = dir.Wh->value.rows();
  if (dir.Wx->value.cols() != 4 * H || dir.Wh->value.cols() != 4 * H ||
      dir.b->value.cols() != 4 * H)
    throw NumericError("lstm_sequence: inconsistent gate widths");

  Var seq = inputs;
  std::vector<int> order;
  if (reversed) {
    order.resize(static_cast<std::size_t>(T));
    for (Index t = 0; t < T; ++t) order[static_cast<std::size_t>(t)] = static_cast<int>(T - 1 - t);
    seq = ad::gather_rows(inputs, order);
  }

  // One product covers the input contribution of every step.
  Var xw = ad::matmul(seq, tape.leaf(dir.Wx));
  Var wh = tape.leaf(dir.Wh);
  Var b = tape.leaf(dir.b);

  Var h = tape.constant(Matrix::Zero(1, H));
  Var c = tape.constant(Matrix::Zero(1, H));
  std::vector<Var> outputs;
  outputs.reserve(static_cast<std::size_t>(T));
  for (Index t = 0; t < T; ++t) {
    Var pre = ad::add_rowvec(ad::add(ad::slice_rows(xw, t, 1), ad::matmul(h, wh)), b);
    Var i = ad::sigmoid(ad::slice_cols(pre, 0, H));
    Var f = ad::sigmoid(ad::slice_cols(pre, H, H));
    Var g = ad::tanh_of(ad::slice_cols(pre, 2 * H, H));
    Var o = ad::sigmoid(ad::slice_cols(pre, 3 * H, H));
    c = ad::add(ad::mul(f, c), ad::mul(i, g));
    h = ad::mul(o, ad::tanh_of(c));
    outputs.push_back(h);
  }
  Var out = ad::concat_rows(outputs);
  if (reversed) out = ad::gather_rows(out, order);
  return out;
}

Var self_attention(Var x, Var R, int heads, const Matrix* mask) {
  const Matrix& X = x.tape->value(x);
  const Matrix& Rv = R.tape->value(R);
  if (Rv.rows() != X.cols()) throw NumericError("self_attention: R rows mismatch");
  if (heads <= 0 || Rv.cols() % heads != 0 || X.cols() % heads != 0)
    throw NumericError("self_attention: heads must divide widths");
  Index dh = Rv.cols() / heads;
  Index dv = X.cols() / heads;
  std::vector<Var> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Var proj = ad::matmul(x, ad::slice_cols(R, h * dh, dh));
    Var logits = ad::scale(ad::matmul_nt(proj, proj),
                           1.0 / std::sqrt(static_cast<Scalar>(dh)));
    Var scores = ad::softmax_rows(logits, mask);
    outs.push_back(ad::matmul(scores, ad::slice_cols(x, h * dv, dv)));
  }
  return outs.size() == 1 ? outs.front() : ad::concat_cols(outs);
}

namespace {

Var maybe_dropout(Var x, const DropoutPlan& plan) {
  if (!plan.active || plan.keep >= 1.0) return x;
  return ad::dropout(x, plan.keep, *plan.rng);
}

Var ffn_block(ad::Tape& tape, const EncoderParams& p, Var x) {
  Var hidden = ad::relu(
      ad::add_rowvec(ad::matmul(x, tape.leaf(p.ffn_W_in)), tape.leaf(p.ffn_b_in)));
  return ad::add_rowvec(ad::matmul(hidden, tape.leaf(p.ffn_W_out)),
                        tape.leaf(p.ffn_b_out));
}

Var lstm_block(ad::Tape& tape, const EncoderParams& p, Var x) {
  Var layer_in = x;
  for (const LstmLayerParams& layer : p.lstm) {
    Var fwd = lstm_sequence(tape, layer_in, layer.fwd, false);
    if (layer.bwd) {
      Var bwd = lstm_sequence(tape, layer_in, *layer.bwd, true);
      layer_in = ad::concat_cols({fwd, bwd});
    } else {
      layer_in = fwd;
    }
  }
  return layer_in;
}

}  // namespace

Var encode(ad::Tape& tape, const EncoderParams& params, Var embedded,
           const DropoutPlan& dropout) {
  const EncoderConfig& cfg = params.cfg;
  if (tape.value(embedded).cols() != cfg.d_model)
    throw NumericError("encode: input width is not d_model");
  Matrix mask;
  const Matrix* mask_ptr = nullptr;
  if (cfg.causal && cfg.use_selfattn) {
    mask = causal_mask(tape.value(embedded).rows());
    mask_ptr = &mask;
  }

  std::vector<Var> blocks;
  Var ffn = layer_normalize(ffn_block(tape, params, embedded),
                            tape.leaf(params.ln_ffn_gain), tape.leaf(params.ln_ffn_bias));
  blocks.push_back(maybe_dropout(ffn, dropout));
  if (cfg.use_lstm) {
    Var rec = layer_normalize(lstm_block(tape, params, embedded),
                              tape.leaf(params.ln_lstm_gain),
                              tape.leaf(params.ln_lstm_bias));
    blocks.push_back(maybe_dropout(rec, dropout));
  }
  if (cfg.use_selfattn) {
    Var att = self_attention(embedded, tape.leaf(params.attn_R), cfg.heads,
                             mask_ptr);
    att = layer_normalize(att, tape.leaf(params.ln_attn_gain),
                          tape.leaf(params.ln_attn_bias));
    blocks.push_back(maybe_dropout(att, dropout));
  }
  return blocks.size() == 1 ? blocks.front() : ad::concat_cols(blocks);
}

Var encode_context(ad::Tape& tape, const EncoderParams& params, Var embedded,
                   const DropoutPlan& dropout) {
  if (params.cfg.causal) throw NumericError("encode_context: causal config");
  return encode(tape, params, embedded, dropout);
}

Var encode_autoregressive(ad::Tape& tape, const EncoderParams& params, Var embedded,
                          const DropoutPlan& dropout) {
  if (!params.cfg.causal) throw NumericError("encode_autoregressive: non-causal config");
  return encode(tape, params, embedded, dropout);
}

}  // namespace daanet
