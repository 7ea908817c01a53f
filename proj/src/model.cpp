#include "daanet/model.hpp"

#include "daanet/init.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string_view>
#include <utility>

namespace daanet {

using ad::Var;

const char* task_name(Task t) { return t == Task::qa ? "qa" : "qg"; }

const char* mode_name(Mode m) {
  switch (m) {
    case Mode::dual: return "dual";
    case Mode::qa_only: return "qa-only";
    case Mode::qg_only: return "qg-only";
  }
  return "dual";
}

Mode parse_mode(const std::string& s) {
  if (s == "dual") return Mode::dual;
  if (s == "qa-only") return Mode::qa_only;
  if (s == "qg-only") return Mode::qg_only;
  throw DataError("config: unknown mode: " + s);
}

// ---------------------------------------------------------------------------
// config

void ModelConfig::validate() const {
  if (d_word <= 0 || d_char <= 0 || d_model <= 0)
    throw DataError("config: embedding widths must be positive");
  if (d_attn < 0 || d_prime < 0) throw DataError("config: negative width");
  if (heads <= 0) throw DataError("config: heads must be positive");
  if (!encoder_no_selfattn && d_model % heads != 0)
    throw DataError("config: heads must divide d_model");
  if (!encoder_no_selfattn && attn_width() % heads != 0)
    throw DataError("config: heads must divide d_attn");
  if (!encoder_no_lstm && lstm_layers <= 0)
    throw DataError("config: lstm_layers must be positive");
  if (!encoder_no_lstm && d_model % 2 != 0)
    throw DataError("config: bidirectional LSTM needs an even d_model");
  if (kappa < 0.0) throw DataError("config: kappa must be nonnegative");
  if (clip <= 0.0) throw DataError("config: clip must be positive");
  if (lr_max <= 0.0) throw DataError("config: lr_max must be positive");
  if (warmup_steps <= 0) throw DataError("config: warmup_steps must be positive");
  if (batch <= 0) throw DataError("config: batch must be positive");
  if (keep <= 0.0 || keep > 1.0) throw DataError("config: keep must be in (0, 1]");
  if (decode_cap <= 0) throw DataError("config: decode_cap must be positive");
  if (min_count < 1) throw DataError("config: min_count must be at least 1");
  if (qa_loss_weight < 0.0 || qg_loss_weight < 0.0)
    throw DataError("config: loss weights must be nonnegative");
}

namespace {

std::string fmt_f(Scalar v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_b(bool v) { return v ? "true" : "false"; }

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw DataError("config: bad boolean for " + key + ": " + v);
}

Scalar parse_f(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    Scalar x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw DataError("config: bad number for " + key + ": " + v);
  }
}

std::int64_t parse_i(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    long long x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw DataError("config: bad integer for " + key + ": " + v);
  }
}

}  // namespace

std::vector<std::pair<std::string, std::string>> ModelConfig::to_kv() const {
  return {
      {"d_word", std::to_string(d_word)},
      {"d_char", std::to_string(d_char)},
      {"d_model", std::to_string(d_model)},
      {"d_attn", std::to_string(d_attn)},
      {"d_prime", std::to_string(d_prime)},
      {"heads", std::to_string(heads)},
      {"lstm_layers", std::to_string(lstm_layers)},
      {"kappa", fmt_f(kappa)},
      {"clip", fmt_f(clip)},
      {"lr_max", fmt_f(lr_max)},
      {"warmup_steps", std::to_string(warmup_steps)},
      {"batch", std::to_string(batch)},
      {"keep", fmt_f(keep)},
      {"decode_cap", std::to_string(decode_cap)},
      {"min_count", std::to_string(min_count)},
      {"mode", mode_name(mode)},
      {"no_copy", fmt_b(no_copy)},
      {"no_context_attention", fmt_b(no_context_attention)},
      {"encoder_no_lstm", fmt_b(encoder_no_lstm)},
      {"encoder_no_selfattn", fmt_b(encoder_no_selfattn)},
      {"unshare_qa_encoders", fmt_b(unshare_qa_encoders)},
      {"unshare_context_encoder", fmt_b(unshare_context_encoder)},
      {"unshare_output_projection", fmt_b(unshare_output_projection)},
      {"share_attention_uv", fmt_b(share_attention_uv)},
      {"vector_bias", fmt_b(vector_bias)},
      {"qa_loss_weight", fmt_f(qa_loss_weight)},
      {"qg_loss_weight", fmt_f(qg_loss_weight)},
      {"seed", std::to_string(seed)},
  };
}

ModelConfig ModelConfig::from_kv(const std::map<std::string, std::string>& kv) {
  ModelConfig c;
  for (const auto& [key, v] : kv) {
    if (key == "d_word") c.d_word = parse_i(key, v);
    else if (key == "d_char") c.d_char = parse_i(key, v);
    else if (key == "d_model") c.d_model = parse_i(key, v);
    else if (key == "d_attn") c.d_attn = parse_i(key, v);
    else if (key == "d_prime") c.d_prime = parse_i(key, v);
    else if (key == "heads") c.heads = static_cast<int>(parse_i(key, v));
    else if (key == "lstm_layers") c.lstm_layers = static_cast<int>(parse_i(key, v));
    else if (key == "kappa") c.kappa = parse_f(key, v);
    else if (key == "clip") c.clip = parse_f(key, v);
    else if (key == "lr_max") c.lr_max = parse_f(key, v);
    else if (key == "warmup_steps") c.warmup_steps = parse_i(key, v);
    else if (key == "batch") c.batch = static_cast<int>(parse_i(key, v));
    else if (key == "keep") c.keep = parse_f(key, v);
    else if (key == "decode_cap") c.decode_cap = static_cast<int>(parse_i(key, v));
    else if (key == "min_count") c.min_count = static_cast<int>(parse_i(key, v));
    else if (key == "mode") c.mode = parse_mode(v);
    else if (key == "no_copy") c.no_copy = parse_bool(key, v);
    else if (key == "no_context_attention") c.no_context_attention = parse_bool(key, v);
    else if (key == "encoder_no_lstm") c.encoder_no_lstm = parse_bool(key, v);
    else if (key == "encoder_no_selfattn") c.encoder_no_selfattn = parse_bool(key, v);
    else if (key == "unshare_qa_encoders") c.unshare_qa_encoders = parse_bool(key, v);
    else if (key == "unshare_context_encoder") c.unshare_context_encoder = parse_bool(key, v);
    else if (key == "unshare_output_projection")
      c.unshare_output_projection = parse_bool(key, v);
    else if (key == "share_attention_uv") c.share_attention_uv = parse_bool(key, v);
    else if (key == "vector_bias") c.vector_bias = parse_bool(key, v);
    else if (key == "qa_loss_weight") c.qa_loss_weight = parse_f(key, v);
    else if (key == "qg_loss_weight") c.qg_loss_weight = parse_f(key, v);
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(parse_i(key, v));
    else throw DataError("config: unknown key: " + key);
  }
  return c;
}

ModelConfig load_config_file(const std::string& path, ModelConfig base) {
  std::ifstream in(path);
  if (!in) throw DataError("config: cannot open " + path);
  std::map<std::string, std::string> kv;
  for (const auto& [key, v] : base.to_kv()) kv[key] = v;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view s = line;
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
      s.remove_suffix(1);
    if (s.empty() || s.front() == '#') continue;
    std::size_t eq = s.find('=');
    if (eq == std::string_view::npos)
      throw DataError("config: line " + std::to_string(line_no) + " is not key=value");
    auto trim = [](std::string_view v) {
      while (!v.empty() && (v.front() == ' ' || v.front() == '\t')) v.remove_prefix(1);
      while (!v.empty() && (v.back() == ' ' || v.back() == '\t')) v.remove_suffix(1);
      return std::string(v);
    };
    kv[trim(s.substr(0, eq))] = trim(s.substr(eq + 1));
  }
  return ModelConfig::from_kv(kv);
}

// ---------------------------------------------------------------------------
// assembly

namespace {

struct Assembler {
  ParameterRegistry& reg;
  std::mt19937_64 rng;

  ParamPtr init(const std::string& name, Index r, Index c) {
    ParamPtr p = reg.create(name, r, c);
    p->value = fan_avg_init(r, c, rng);
    return p;
  }
  ParamPtr zeros(const std::string& name, Index r, Index c) {
    return reg.create(name, r, c);
  }
  ParamPtr ones(const std::string& name, Index r, Index c) {
    ParamPtr p = reg.create(name, r, c);
    p->value.setOnes();
    return p;
  }
};

EncoderConfig encoder_cfg(const ModelConfig& cfg, bool causal) {
  EncoderConfig e;
  e.d_model = cfg.d_model;
  e.lstm_layers = cfg.lstm_layers;
  e.heads = cfg.heads;
  e.d_attn = cfg.attn_width();
  e.causal = causal;
  e.bidirectional = !causal;
  e.use_lstm = !cfg.encoder_no_lstm;
  e.use_selfattn = !cfg.encoder_no_selfattn;
  e.validate();
  return e;
}

LstmDirParams make_lstm_dir(Assembler& a, const std::string& prefix, Index d_in,
                            Index hidden) {
  LstmDirParams d;
  d.Wx = a.init(prefix + ".Wx", d_in, 4 * hidden);
  d.Wh = a.init(prefix + ".Wh", hidden, 4 * hidden);
  d.b = a.zeros(prefix + ".b", 1, 4 * hidden);
  d.b->value.middleCols(hidden, hidden).setOnes();  // forget gate starts open
  return d;
}

void make_encoder(Assembler& a, const std::string& prefix, const EncoderConfig& cfg) {
  Index d = cfg.d_model;
  Index h = cfg.ffn_hidden();
  a.init(prefix + ".ffn.W_in", d, h);
  a.zeros(prefix + ".ffn.b_in", 1, h);
  a.init(prefix + ".ffn.W_out", h, d);
  a.zeros(prefix + ".ffn.b_out", 1, d);
  a.ones(prefix + ".ln_ffn.gain", 1, d);
  a.zeros(prefix + ".ln_ffn.bias", 1, d);
  if (cfg.use_lstm) {
    Index hidden = cfg.bidirectional ? d / 2 : d;
    for (int l = 0; l < cfg.lstm_layers; ++l) {
      std::string lp = prefix + ".lstm" + std::to_string(l);
      make_lstm_dir(a, lp + ".fwd", d, hidden);
      if (cfg.bidirectional) make_lstm_dir(a, lp + ".bwd", d, hidden);
    }
    a.ones(prefix + ".ln_lstm.gain", 1, d);
    a.zeros(prefix + ".ln_lstm.bias", 1, d);
  }
  if (cfg.use_selfattn) {
    a.init(prefix + ".attn.R", d, cfg.d_attn);
    a.ones(prefix + ".ln_attn.gain", 1, d);
    a.zeros(prefix + ".ln_attn.bias", 1, d);
  }
}

void alias_encoder(ParameterRegistry& reg, const std::string& alias,
                   const std::string& target, const EncoderConfig& cfg) {
  std::vector<std::string> names = {".ffn.W_in", ".ffn.b_in", ".ffn.W_out",
                                    ".ffn.b_out", ".ln_ffn.gain", ".ln_ffn.bias"};
  if (cfg.use_lstm) {
    for (int l = 0; l < cfg.lstm_layers; ++l) {
      std::string lp = ".lstm" + std::to_string(l);
      for (const char* dir : {".fwd", ".bwd"}) {
        if (std::string(dir) == ".bwd" && !cfg.bidirectional) continue;
        names.push_back(lp + dir + ".Wx");
        names.push_back(lp + dir + ".Wh");
        names.push_back(lp + dir + ".b");
      }
    }
    names.push_back(".ln_lstm.gain");
    names.push_back(".ln_lstm.bias");
  }
  if (cfg.use_selfattn) {
    names.push_back(".attn.R");
    names.push_back(".ln_attn.gain");
    names.push_back(".ln_attn.bias");
  }
  for (const std::string& n : names) reg.add_alias(alias + n, target + n);
}

EncoderParams resolve_encoder(const ParameterRegistry& reg, const std::string& prefix,
                              const EncoderConfig& cfg) {
  EncoderParams p;
  p.cfg = cfg;
  p.ffn_W_in = reg.at(prefix + ".ffn.W_in");
  p.ffn_b_in = reg.at(prefix + ".ffn.b_in");
  p.ffn_W_out = reg.at(prefix + ".ffn.W_out");
  p.ffn_b_out = reg.at(prefix + ".ffn.b_out");
  p.ln_ffn_gain = reg.at(prefix + ".ln_ffn.gain");
  p.ln_ffn_bias = reg.at(prefix + ".ln_ffn.bias");
  if (cfg.use_lstm) {
    for (int l = 0; l < cfg.lstm_layers; ++l) {
      std::string lp = prefix + ".lstm" + std::to_string(l);
      LstmLayerParams layer;
      layer.fwd = {reg.at(lp + ".fwd.Wx"), reg.at(lp + ".fwd.Wh"), reg.at(lp + ".fwd.b")};
      if (cfg.bidirectional)
        layer.bwd = LstmDirParams{reg.at(lp + ".bwd.Wx"), reg.at(lp + ".bwd.Wh"),
                                  reg.at(lp + ".bwd.b")};
      p.lstm.push_back(std::move(layer));
    }
    p.ln_lstm_gain = reg.at(prefix + ".ln_lstm.gain");
    p.ln_lstm_bias = reg.at(prefix + ".ln_lstm.bias");
  }
  if (cfg.use_selfattn) {
    p.attn_R = reg.at(prefix + ".attn.R");
    p.ln_attn_gain = reg.at(prefix + ".ln_attn.gain");
    p.ln_attn_bias = reg.at(prefix + ".ln_attn.bias");
  }
  return p;
}

}  // namespace

void Model::assemble() {
  Assembler a{registry_, std::mt19937_64(cfg_.seed)};
  bool qa_active = cfg_.task_active(Task::qa);
  bool qg_active = cfg_.task_active(Task::qg);
  bool dual = qa_active && qg_active;

  if (!dual && (cfg_.unshare_qa_encoders || cfg_.unshare_context_encoder ||
                cfg_.unshare_output_projection))
    warnings_.push_back("unshare flags have no effect in single-task mode");
  if (!dual && cfg_.share_attention_uv)
    warnings_.push_back("share_attention_uv has no effect in single-task mode");

  // embedding
  Index v_rows = vocab_.size();
  embedding_.cfg = {cfg_.d_word, cfg_.d_char, cfg_.d_model, cfg_.vector_bias};
  embedding_.word = a.init("embedding.word", v_rows, cfg_.d_word);
  embedding_.word->value.row(Vocabulary::kPad).setZero();
  embedding_.word->frozen_rows.assign(static_cast<std::size_t>(v_rows), 1);
  for (int s : {Vocabulary::kUnk, Vocabulary::kStart, Vocabulary::kEnd})
    embedding_.word->frozen_rows[static_cast<std::size_t>(s)] = 0;
  embedding_.chars = a.init("embedding.chars", CharTable::size(), cfg_.d_char);
  embedding_.chars->value.row(CharTable::kPadChar).setZero();
  embedding_.chars->frozen_rows.assign(static_cast<std::size_t>(CharTable::size()), 0);
  embedding_.chars->frozen_rows[CharTable::kPadChar] = 1;
  embedding_.conv = a.init("embedding.conv", 3 * cfg_.d_char, cfg_.d_char);
  embedding_.H1 = a.init("embedding.H1", cfg_.d_word + cfg_.d_char, cfg_.d_model);
  embedding_.H2 = a.init("embedding.H2", cfg_.d_model, cfg_.d_model);
  embedding_.H3 = a.init("embedding.H3", cfg_.d_model, cfg_.d_model);
  Index bias_cols = cfg_.vector_bias ? cfg_.d_model : 1;
  embedding_.v1 = a.zeros("embedding.v1", 1, bias_cols);
  embedding_.v2 = a.zeros("embedding.v2", 1, bias_cols);
  embedding_.v3 = a.zeros("embedding.v3", 1, bias_cols);

  // encoders; creation order is fixed so init streams are reproducible
  EncoderConfig ctx_cfg = encoder_cfg(cfg_, false);
  EncoderConfig causal_cfg = encoder_cfg(cfg_, true);
  auto make_shared_encoder = [&](const std::string& base, const EncoderConfig& ec,
                                 bool split) {
    if (split && dual) {
      make_encoder(a, "qa." + base, ec);
      make_encoder(a, "qg." + base, ec);
    } else {
      make_encoder(a, base, ec);
      if (qa_active) alias_encoder(registry_, "qa." + base, base, ec);
      if (qg_active) alias_encoder(registry_, "qg." + base, base, ec);
    }
  };
  make_shared_encoder("encoder.context", ctx_cfg, cfg_.unshare_context_encoder);
  make_shared_encoder("encoder.question", causal_cfg, cfg_.unshare_qa_encoders);
  make_shared_encoder("encoder.answer", causal_cfg, cfg_.unshare_qa_encoders);

  // attention sites
  Index de = cfg_.d_enc();
  Index dp = cfg_.prime_width();
  auto make_site = [&](const std::string& name) {
    a.init(name + ".U", de, dp);
    a.init(name + ".V", de, dp);
  };
  auto alias_site = [&](const std::string& alias, const std::string& target) {
    registry_.add_alias(alias + ".U", target + ".U");
    registry_.add_alias(alias + ".V", target + ".V");
  };
  bool share_uv = cfg_.share_attention_uv && dual;
  if (!cfg_.no_context_attention) {
    if (share_uv) {
      make_site("attn.fold_first");
      alias_site("attn.context_answer", "attn.fold_first");
      alias_site("attn.context_question", "attn.fold_first");
    } else {
      if (qg_active) make_site("attn.context_answer");
      if (qa_active) make_site("attn.context_question");
    }
  }
  if (share_uv) {
    make_site("attn.fold_second");
    alias_site("attn.question_context", "attn.fold_second");
    alias_site("attn.answer_context", "attn.fold_second");
  } else {
    if (qg_active) make_site("attn.question_context");
    if (qa_active) make_site("attn.answer_context");
  }

  // generator heads
  auto make_head = [&](const std::string& task) {
    a.init(task + ".out.W1", de, kGenHidden);
    a.zeros(task + ".out.b1", 1, kGenHidden);
    if (!cfg_.no_copy) {
      a.init(task + ".out.gate_W", 2 * de, 1);
      a.zeros(task + ".out.gate_b", 1, 1);
    }
  };
  if (qa_active) make_head("qa");
  if (qg_active) make_head("qg");
  if (cfg_.unshare_output_projection && dual) {
    a.init("qa.out.proj.W", kGenHidden, v_rows);
    a.zeros("qa.out.proj.b", 1, v_rows);
    a.init("qg.out.proj.W", kGenHidden, v_rows);
    a.zeros("qg.out.proj.b", 1, v_rows);
  } else {
    a.init("out.proj.W", kGenHidden, v_rows);
    a.zeros("out.proj.b", 1, v_rows);
    for (const char* task : {"qa", "qg"}) {
      if (!cfg_.task_active(task[1] == 'a' ? Task::qa : Task::qg)) continue;
      registry_.add_alias(std::string(task) + ".out.proj.W", "out.proj.W");
      registry_.add_alias(std::string(task) + ".out.proj.b", "out.proj.b");
    }
  }

  // resolved views
  auto build_view = [&](Task task) {
    std::string tp = task_name(task);
    TaskParams v;
    v.context = resolve_encoder(registry_, tp + ".encoder.context", ctx_cfg);
    std::string cp_base = task == Task::qa ? ".encoder.question" : ".encoder.answer";
    std::string pf_base = task == Task::qa ? ".encoder.answer" : ".encoder.question";
    v.counterpart = resolve_encoder(registry_, tp + cp_base, causal_cfg);
    v.prefix = resolve_encoder(registry_, tp + pf_base, causal_cfg);
    if (!cfg_.no_context_attention) {
      std::string f1 = task == Task::qa ? "attn.context_question" : "attn.context_answer";
      v.fold1 = {registry_.at(f1 + ".U"), registry_.at(f1 + ".V")};
    }
    std::string f2 = task == Task::qa ? "attn.answer_context" : "attn.question_context";
    v.fold2 = {registry_.at(f2 + ".U"), registry_.at(f2 + ".V")};
    v.gen.W1 = registry_.at(tp + ".out.W1");
    v.gen.b1 = registry_.at(tp + ".out.b1");
    if (!cfg_.no_copy) {
      v.gen.gate_W = registry_.at(tp + ".out.gate_W");
      v.gen.gate_b = registry_.at(tp + ".out.gate_b");
    }
    v.gen.proj_W = registry_.at(tp + ".out.proj.W");
    v.gen.proj_b = registry_.at(tp + ".out.proj.b");
    v.loss_weight = task == Task::qa ? cfg_.qa_loss_weight : cfg_.qg_loss_weight;
    return v;
  };
  if (qa_active) qa_ = build_view(Task::qa);
  if (qg_active) qg_ = build_view(Task::qg);
}

Model::Model(ModelConfig cfg, Vocabulary vocab)
    : cfg_(std::move(cfg)),
      vocab_(std::move(vocab)),
      dropout_rng_(cfg_.seed ^ 0x9e3779b97f4a7c15ull) {
  cfg_.validate();
  if (vocab_.size() < Vocabulary::kSpecials)
    throw DataError("model: vocabulary missing specials");
  assemble();
}

const TaskParams& Model::task_params(Task t) const {
  const std::optional<TaskParams>& v = t == Task::qa ? qa_ : qg_;
  if (!v) throw DataError(std::string("model: task inactive: ") + task_name(t));
  return *v;
}

Var Model::embed_tokens(ad::Tape& tape, const std::vector<std::string>& tokens) {
  return embed_sequence(tape, embedding_, word_ids_of(vocab_, tokens),
                        char_ids_of(tokens));
}

DirectionInput Model::make_training_input(Task task, const Triplet& t) const {
  DirectionInput in;
  in.context = t.context_tokens;
  in.counterpart = task == Task::qa ? t.question_tokens : t.answer_tokens;
  in.gold = task == Task::qa ? t.answer_tokens : t.question_tokens;
  in.prefix.reserve(in.gold.size() + 1);
  in.prefix.push_back(Vocabulary::start_token());
  in.prefix.insert(in.prefix.end(), in.gold.begin(), in.gold.end());
  return in;
}

DirectionOutputs Model::run_direction(ad::Tape& tape, Task task,
                                      const DirectionInput& in, bool training) {
  const TaskParams& v = task_params(task);
  if (in.context.empty() || in.counterpart.empty() || in.prefix.empty())
    throw DataError("model: empty sequence in direction input");

  DropoutPlan drop{cfg_.keep, training && cfg_.keep < 1.0, &dropout_rng_};

  DirectionOutputs out;
  Var e_ctx = embed_tokens(tape, in.context);
  Var e_cp = embed_tokens(tape, in.counterpart);
  Var e_pf = embed_tokens(tape, in.prefix);

  out.context_enc = encode_context(tape, v.context, e_ctx, drop);
  out.counterpart_enc = encode_autoregressive(tape, v.counterpart, e_cp, drop);
  out.prefix_enc = encode_autoregressive(tape, v.prefix, e_pf, drop);

  if (!cfg_.no_context_attention) {
    ScoredFold f1 = fold_first(tape, out.context_enc, out.counterpart_enc, v.fold1);
    out.scores1 = f1.scores;
    out.fused_context = f1.folded;
  } else {
    out.fused_context = out.context_enc;
  }

  ScoredFold f2 = fold_second(tape, out.prefix_enc, out.fused_context, v.fold2);
  out.scores2 = f2.scores;
  out.d_rows = f2.folded;

  // Without the copy path the output space stays the plain vocabulary, so
  // out-of-vocabulary gold tokens score as UNK instead of an unreachable id.
  out.ext = ExtendedSpace::build(vocab_, cfg_.no_copy ? std::vector<std::string>{}
                                                      : in.context);
  out.p_vocab = vocab_distribution(tape, out.d_rows, v.gen);
  if (cfg_.no_copy) {
    out.p_final = out.p_vocab;
  } else {
    out.lambda = mixture_gate(tape, out.d_rows, out.prefix_enc, v.gen);
    Var merge = tape.constant(context_merge_matrix(out.ext.context_ext_ids,
                                                   out.ext.size()));
    out.p_context = ad::matmul(out.scores2, merge);
    out.p_final = final_distribution(out.lambda, out.p_vocab, out.p_context);
  }
  out.coverage = ad::coverage_steps(out.scores2);

  if (!in.gold.empty()) {
    out.targets.reserve(in.gold.size() + 1);
    for (const std::string& g : in.gold)
      out.targets.push_back(out.ext.target_id(vocab_, g));
    out.targets.push_back(Vocabulary::kEnd);
    if (static_cast<Index>(out.targets.size()) != tape.value(out.p_final).rows())
      throw NumericError("model: target/step mismatch");
    out.nll = ad::nll_pick(out.p_final, out.targets, 1e-12, &out.clamp_count);
    Var cov_total = ad::sum_all(out.coverage);
    out.loss = ad::add(out.nll, ad::scale(cov_total, cfg_.kappa));
  }
  return out;
}

TripletOutputs Model::triplet_outputs(ad::Tape& tape, const Triplet& t, bool training) {
  TripletOutputs out;
  std::optional<Var> total;
  auto add_task = [&](Task task, std::optional<DirectionOutputs>& slot) {
    if (!cfg_.task_active(task)) return;
    slot = run_direction(tape, task, make_training_input(task, t), training);
    Var piece = ad::scale(slot->loss, task_params(task).loss_weight);
    total = total ? ad::add(*total, piece) : piece;
  };
  add_task(Task::qg, out.qg);
  add_task(Task::qa, out.qa);
  out.loss = *total;
  return out;
}

TrainMetrics Model::train_step(const std::vector<Triplet>& batch, AdamState& state) {
  if (batch.empty()) throw DataError("train_step: empty batch");
  TrainMetrics met;
  GradMap total;
  Scalar loss_sum = 0.0;
  for (const Triplet& t : batch) {
    ad::Tape tape;
    TripletOutputs outs = triplet_outputs(tape, t, true);
    Scalar lv = tape.value(outs.loss)(0, 0);
    if (!std::isfinite(lv)) throw NumericError("train_step: non-finite loss");
    loss_sum += lv;
    tape.backward(outs.loss);
    GradMap g = collect_gradients(tape, registry_, true);
    if (total.empty()) {
      total = std::move(g);
    } else {
      for (auto& [name, m] : total) m += g.at(name);
    }
    auto tally = [&](const std::optional<DirectionOutputs>& d, Scalar& nll_acc,
                     Scalar& cov_acc, long& tok_acc) {
      if (!d) return;
      nll_acc += tape.value(d->nll)(0, 0);
      cov_acc += tape.value(d->coverage).sum();
      tok_acc += static_cast<long>(d->targets.size());
      met.clamped += d->clamp_count;
    };
    tally(outs.qa, met.qa_nll, met.qa_coverage, met.qa_tokens);
    tally(outs.qg, met.qg_nll, met.qg_coverage, met.qg_tokens);
  }
  Scalar inv = 1.0 / static_cast<Scalar>(batch.size());
  for (auto& [name, g] : total) g *= inv;
  met.loss = loss_sum * inv;
  met.grad_norm = clip_global_norm(total, cfg_.clip);
  met.lr = learning_rate(state.step + 1, cfg_.warmup_steps, cfg_.lr_max);
  adam_step(registry_, total, state, met.lr);
  met.step = state.step;
  return met;
}

Index argmax_lowest(const Matrix& row) {
  Index best = 0;
  for (Index j = 1; j < row.cols(); ++j)
    if (row(0, j) > row(0, best)) best = j;
  return best;
}

std::vector<std::string> Model::decode(Task task, const Triplet& t, DecodeTrace* trace) {
  DirectionInput in;
  in.context = t.context_tokens;
  in.counterpart = task == Task::qa ? t.question_tokens : t.answer_tokens;
  in.prefix = {Vocabulary::start_token()};

  std::vector<std::string> emitted;
  while (static_cast<int>(emitted.size()) < cfg_.decode_cap) {
    ad::Tape tape(false);
    DirectionOutputs out = run_direction(tape, task, in, false);
    const Matrix& p = tape.value(out.p_final);
    Matrix row = p.row(p.rows() - 1);
    Index pick = argmax_lowest(row);
    if (trace) {
      trace->step_rows.push_back(row);
      if (out.scores1.valid()) trace->fold1_scores = tape.value(out.scores1);
      trace->fold2_scores = tape.value(out.scores2);
    }
    if (static_cast<int>(pick) == Vocabulary::kEnd) break;
    const std::string& tok = out.ext.surface(vocab_, static_cast<int>(pick));
    emitted.push_back(tok);
    in.prefix.push_back(tok);
  }
  return emitted;
}

}  // namespace daanet
