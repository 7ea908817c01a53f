#include "daanet/encoder.hpp"
#include "daanet/init.hpp"

#include "doctest.h"

#include <cmath>

using namespace daanet;
using ad::Var;

namespace {

ParamPtr param(Matrix m) {
  auto p = std::make_shared<Parameter>();
  p->value = std::move(m);
  return p;
}

LstmDirParams zero_lstm(Index d_in, Index hidden) {
  return {param(Matrix::Zero(d_in, 4 * hidden)), param(Matrix::Zero(hidden, 4 * hidden)),
          param(Matrix::Zero(1, 4 * hidden))};
}

EncoderParams random_encoder(const EncoderConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto next = [&](Index r, Index c) { return param(fan_avg_init(r, c, rng)); };
  EncoderParams p;
  p.cfg = cfg;
  Index d = cfg.d_model;
  p.ffn_W_in = next(d, cfg.ffn_hidden());
  p.ffn_b_in = next(1, cfg.ffn_hidden());
  p.ffn_W_out = next(cfg.ffn_hidden(), d);
  p.ffn_b_out = next(1, d);
  p.ln_ffn_gain = param(Matrix::Ones(1, d));
  p.ln_ffn_bias = param(Matrix::Zero(1, d));
  if (cfg.use_lstm) {
    Index h = cfg.bidirectional ? d / 2 : d;
    for (int l = 0; l < cfg.lstm_layers; ++l) {
      LstmLayerParams layer;
      layer.fwd = {next(d, 4 * h), next(h, 4 * h), next(1, 4 * h)};
      if (cfg.bidirectional)
        layer.bwd = LstmDirParams{next(d, 4 * h), next(h, 4 * h), next(1, 4 * h)};
      p.lstm.push_back(layer);
    }
    p.ln_lstm_gain = param(Matrix::Ones(1, d));
    p.ln_lstm_bias = param(Matrix::Zero(1, d));
  }
  if (cfg.use_selfattn) {
    p.attn_R = next(d, cfg.d_attn);
    p.ln_attn_gain = param(Matrix::Ones(1, d));
    p.ln_attn_bias = param(Matrix::Zero(1, d));
  }
  return p;
}

}  // namespace

TEST_CASE("layer norm of a constant row is the bias") {
  ad::Tape tape;
  Var x = tape.constant(Matrix::Constant(2, 4, 3.7));
  Matrix gain(1, 4), bias(1, 4);
  gain << 2.0, 3.0, 4.0, 5.0;
  bias << 0.1, 0.2, 0.3, 0.4;
  Var out = layer_normalize(x, tape.constant(gain), tape.constant(bias));
  for (Index j = 0; j < 4; ++j) {
    CHECK(tape.value(out)(0, j) == doctest::Approx(bias(0, j)).epsilon(1e-9));
    CHECK(tape.value(out)(1, j) == doctest::Approx(bias(0, j)).epsilon(1e-9));
  }
}

TEST_CASE("layer norm standardizes each row") {
  ad::Tape tape;
  Matrix x = fan_avg_init(3, 8, 5);
  Var out = layer_normalize(tape.constant(x), tape.constant(Matrix::Ones(1, 8)),
                            tape.constant(Matrix::Zero(1, 8)));
  const Matrix& v = tape.value(out);
  for (Index i = 0; i < 3; ++i) {
    CHECK(v.row(i).mean() == doctest::Approx(0.0).epsilon(1e-9));
    Scalar var = v.row(i).array().square().mean();
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));  // eps shifts it slightly
  }
}

TEST_CASE("causal mask admits the lower triangle") {
  Matrix m = causal_mask(3);
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 3; ++j) {
      if (j <= i) CHECK(m(i, j) == 0.0);
      else CHECK(is_masked_logit(m(i, j)));
    }
}

TEST_CASE("zero-weight lstm emits zero states") {
  ad::Tape tape;
  Var x = tape.constant(fan_avg_init(4, 3, 9));
  LstmDirParams dir = zero_lstm(3, 2);
  Var h = lstm_sequence(tape, x, dir, false);
  CHECK(tape.value(h).rows() == 4);
  CHECK(tape.value(h).cols() == 2);
  CHECK(tape.value(h).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("lstm cell follows the gate order input, forget, cell, output") {
  // Zero weight matrices isolate the biases: i=sigmoid(b_i), g=tanh(b_g), ...
  Index h = 2;
  LstmDirParams dir = zero_lstm(3, h);
  Scalar atanh_half = 0.5 * std::log(3.0);  // tanh(atanh_half) = 0.5
  dir.b->value.middleCols(0 * h, h).setConstant(50.0);         // i ~ 1
  dir.b->value.middleCols(1 * h, h).setConstant(50.0);         // f ~ 1
  dir.b->value.middleCols(2 * h, h).setConstant(atanh_half);   // g = 0.5
  dir.b->value.middleCols(3 * h, h).setConstant(50.0);         // o ~ 1

  ad::Tape tape;
  Var x = tape.constant(Matrix::Zero(2, 3));
  Var out = lstm_sequence(tape, x, dir, false);
  // c1 = 0.5, h1 = tanh(0.5); c2 = c1 + 0.5 = 1, h2 = tanh(1)
  CHECK(tape.value(out)(0, 0) == doctest::Approx(std::tanh(0.5)).epsilon(1e-9));
  CHECK(tape.value(out)(1, 1) == doctest::Approx(std::tanh(1.0)).epsilon(1e-9));

  // flipping the input gate bias to -50 kills the cell
  dir.b->value.middleCols(0, h).setConstant(-50.0);
  ad::Tape t2;
  Var dead = lstm_sequence(t2, t2.constant(Matrix::Zero(2, 3)), dir, false);
  CHECK(t2.value(dead).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("reversed lstm equals the forward pass on reversed input") {
  std::mt19937_64 rng(11);
  LstmDirParams dir = {param(fan_avg_init(3, 8, rng)), param(fan_avg_init(2, 8, rng)),
                       param(fan_avg_init(1, 8, rng))};
  Matrix x = fan_avg_init(5, 3, 13);
  Matrix x_rev = x.colwise().reverse();

  ad::Tape tape;
  Var back = lstm_sequence(tape, tape.constant(x), dir, true);
  Var fwd_on_rev = lstm_sequence(tape, tape.constant(x_rev), dir, false);
  Matrix expect = tape.value(fwd_on_rev).colwise().reverse();
  CHECK((tape.value(back) - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("single-head self-attention matches the brute-force formula") {
  ad::Tape tape;
  Matrix x = fan_avg_init(4, 6, 17);
  Matrix R = fan_avg_init(6, 6, 18);
  Var out = self_attention(tape.constant(x), tape.constant(R), 1, nullptr);

  Matrix q = x * R;
  Matrix logits = q * q.transpose() / std::sqrt(6.0);
  Matrix probs(4, 4);
  for (Index i = 0; i < 4; ++i) {
    Matrix row = logits.row(i);
    Scalar mx = row.maxCoeff();
    Matrix ex = (row.array() - mx).exp();
    probs.row(i) = ex / ex.sum();
  }
  Matrix expect = probs * x;
  CHECK((tape.value(out) - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("multi-head self-attention splits projections and features per head") {
  ad::Tape tape;
  Matrix x = fan_avg_init(3, 4, 19);
  Matrix R = fan_avg_init(4, 6, 20);
  Var out = self_attention(tape.constant(x), tape.constant(R), 2, nullptr);

  Matrix expect(3, 4);
  for (int head = 0; head < 2; ++head) {
    Matrix Rh = R.middleCols(head * 3, 3);
    Matrix xh = x.middleCols(head * 2, 2);
    Matrix q = x * Rh;
    Matrix logits = q * q.transpose() / std::sqrt(3.0);
    Matrix probs(3, 3);
    for (Index i = 0; i < 3; ++i) {
      Matrix row = logits.row(i);
      Scalar mx = row.maxCoeff();
      Matrix ex = (row.array() - mx).exp();
      probs.row(i) = ex / ex.sum();
    }
    expect.middleCols(head * 2, 2) = probs * xh;
  }
  CHECK((tape.value(out) - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("masked self-attention gives position 0 only itself") {
  ad::Tape tape;
  Matrix x = fan_avg_init(3, 4, 21);
  Matrix R = fan_avg_init(4, 4, 22);
  Matrix mask = causal_mask(3);
  Var out = self_attention(tape.constant(x), tape.constant(R), 1, &mask);
  CHECK((tape.value(out).row(0) - x.row(0)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("encoder output concatenates one d_model block per enabled stage") {
  EncoderConfig full;
  full.d_model = 6;
  full.lstm_layers = 2;
  full.heads = 2;
  full.d_attn = 6;
  full.validate();
  CHECK(full.d_enc() == 18);
  CHECK(full.ffn_hidden() == 24);

  ad::Tape tape;
  Var x = tape.constant(fan_avg_init(5, 6, 23));
  Var y = encode(tape, random_encoder(full, 31), x);
  CHECK(tape.value(y).rows() == 5);
  CHECK(tape.value(y).cols() == 18);

  EncoderConfig no_lstm = full;
  no_lstm.use_lstm = false;
  CHECK(no_lstm.d_enc() == 12);
  Var y2 = encode(tape, random_encoder(no_lstm, 32), x);
  CHECK(tape.value(y2).cols() == 12);

  EncoderConfig ffn_only = no_lstm;
  ffn_only.use_selfattn = false;
  CHECK(ffn_only.d_enc() == 6);
  Var y3 = encode(tape, random_encoder(ffn_only, 33), x);
  CHECK(tape.value(y3).cols() == 6);
}

TEST_CASE("encoder config validation") {
  EncoderConfig c;
  c.d_model = 6;
  c.heads = 4;  // does not divide 6
  CHECK_THROWS_AS(c.validate(), DataError);
  c.heads = 2;
  c.d_attn = 7;  // not divisible by heads
  CHECK_THROWS_AS(c.validate(), DataError);
  c.d_attn = 6;
  c.causal = true;  // causal with bidirectional is contradictory
  CHECK_THROWS_AS(c.validate(), DataError);
  c.bidirectional = false;
  c.validate();
  c.lstm_layers = 0;
  CHECK_THROWS_AS(c.validate(), DataError);
}

TEST_CASE("autoregressive encoding is blind to the future") {
  EncoderConfig cfg;
  cfg.d_model = 4;
  cfg.lstm_layers = 1;
  cfg.heads = 2;
  cfg.d_attn = 4;
  cfg.causal = true;
  cfg.bidirectional = false;
  cfg.validate();
  EncoderParams p = random_encoder(cfg, 41);

  Matrix a = fan_avg_init(6, 4, 42);
  Matrix b = a;
  b.row(5) = fan_avg_init(1, 4, 43);

  ad::Tape tape;
  Matrix ya = tape.value(encode_autoregressive(tape, p, tape.constant(a)));
  Matrix yb = tape.value(encode_autoregressive(tape, p, tape.constant(b)));
  CHECK(ya.topRows(5) == yb.topRows(5));
  CHECK(ya.row(5) != yb.row(5));

  // the bidirectional context encoder must NOT have this property
  EncoderConfig bi;
  bi.d_model = 4;
  bi.lstm_layers = 1;
  bi.heads = 2;
  bi.d_attn = 4;
  bi.validate();
  EncoderParams pb = random_encoder(bi, 44);
  Matrix za = tape.value(encode_context(tape, pb, tape.constant(a)));
  Matrix zb = tape.value(encode_context(tape, pb, tape.constant(b)));
  CHECK(za.row(0) != zb.row(0));
}

TEST_CASE("encode wires the causal flag through every block") {
  EncoderConfig cfg;
  cfg.d_model = 4;
  cfg.lstm_layers = 2;  // stacked layers must stay causal too
  cfg.heads = 1;
  cfg.d_attn = 4;
  cfg.causal = true;
  cfg.bidirectional = false;
  cfg.validate();
  EncoderParams p = random_encoder(cfg, 51);

  Matrix a = fan_avg_init(5, 4, 52);
  for (Index t = 1; t < 5; ++t) {
    Matrix b = a;
    b.bottomRows(5 - t) = fan_avg_init(5 - t, 4, 60 + static_cast<std::uint64_t>(t));
    ad::Tape tape;
    Matrix ya = tape.value(encode_autoregressive(tape, p, tape.constant(a)));
    Matrix yb = tape.value(encode_autoregressive(tape, p, tape.constant(b)));
    CHECK(ya.topRows(t) == yb.topRows(t));
  }
}

TEST_CASE("dropout plan perturbs training encodes only") {
  EncoderConfig cfg;
  cfg.d_model = 4;
  cfg.lstm_layers = 1;
  cfg.heads = 2;
  cfg.d_attn = 4;
  cfg.validate();
  EncoderParams p = random_encoder(cfg, 71);
  Matrix x = fan_avg_init(4, 4, 72);

  ad::Tape tape;
  Var plain = encode(tape, p, tape.constant(x));
  Var again = encode(tape, p, tape.constant(x));
  CHECK(tape.value(plain) == tape.value(again));

  std::mt19937_64 rng(9);
  DropoutPlan drop{0.5, true, &rng};
  Var noisy = encode(tape, p, tape.constant(x), drop);
  CHECK(tape.value(noisy) != tape.value(plain));
}
