#include "daanet/checkpoint.hpp"
#include "daanet/model.hpp"
#include "daanet/synthetic.hpp"
#include "daanet/train.hpp"

#include "doctest.h"

#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

using namespace daanet;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.d_word = 8;
  c.d_char = 4;
  c.d_model = 8;
  c.heads = 2;
  c.lstm_layers = 1;
  c.keep = 1.0;
  c.batch = 4;
  c.min_count = 1;
  c.decode_cap = 6;
  c.warmup_steps = 10;
  c.seed = 11;
  return c;
}

Vocabulary tiny_vocab() {
  return Vocabulary::build(vocabulary_corpus(synthetic_qa_corpus()), 1);
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("config validation rejects bad settings") {
  CHECK_NOTHROW(tiny_config().validate());

  auto bad = [](auto&& tweak) {
    ModelConfig c = tiny_config();
    tweak(c);
    CHECK_THROWS_AS(c.validate(), DataError);
  };
  bad([](ModelConfig& c) { c.d_word = 0; });
  bad([](ModelConfig& c) { c.d_attn = -1; });
  bad([](ModelConfig& c) { c.heads = 3; });  // does not divide d_model
  bad([](ModelConfig& c) { c.d_model = 9; });
  bad([](ModelConfig& c) { c.lstm_layers = 0; });
  bad([](ModelConfig& c) { c.keep = 0.0; });
  bad([](ModelConfig& c) { c.keep = 1.5; });
  bad([](ModelConfig& c) { c.kappa = -0.5; });
  bad([](ModelConfig& c) { c.clip = 0.0; });
  bad([](ModelConfig& c) { c.lr_max = 0.0; });
  bad([](ModelConfig& c) { c.warmup_steps = 0; });
  bad([](ModelConfig& c) { c.batch = 0; });
  bad([](ModelConfig& c) { c.decode_cap = 0; });
  bad([](ModelConfig& c) { c.min_count = 0; });
  bad([](ModelConfig& c) { c.qg_loss_weight = -1.0; });

  // odd d_model is fine once the bidirectional LSTM is off,
  // as long as the head count still divides it
  ModelConfig c = tiny_config();
  c.d_model = 9;
  c.heads = 3;
  c.encoder_no_lstm = true;
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("config kv round trip preserves every field") {
  ModelConfig c = tiny_config();
  c.d_attn = 4;
  c.d_prime = 12;
  c.kappa = 0.25;
  c.lr_max = 3e-4;
  c.mode = Mode::qg_only;
  c.no_copy = true;
  c.unshare_output_projection = true;
  c.share_attention_uv = true;
  c.vector_bias = true;
  c.qa_loss_weight = 0.5;
  c.qg_loss_weight = 2.0;
  c.seed = 987654321;

  std::map<std::string, std::string> kv;
  for (const auto& [k, v] : c.to_kv()) kv[k] = v;
  ModelConfig back = ModelConfig::from_kv(kv);
  CHECK(back.to_kv() == c.to_kv());

  kv["no_such_knob"] = "1";
  CHECK_THROWS_AS(ModelConfig::from_kv(kv), DataError);
}

TEST_CASE("config files override the base and report bad lines") {
  std::string path = "/tmp/daanet_test_config.txt";
  {
    std::ofstream f(path);
    f << "# comment line\n";
    f << "\n";
    f << "  d_model = 16\n";
    f << "mode=qa-only\n";
    f << "keep=0.8\t\n";
  }
  ModelConfig base = tiny_config();
  ModelConfig got = load_config_file(path, base);
  CHECK(got.d_model == 16);
  CHECK(got.mode == Mode::qa_only);
  CHECK(got.keep == doctest::Approx(0.8));
  CHECK(got.d_word == base.d_word);

  {
    std::ofstream f(path);
    f << "d_model=16\n";
    f << "just some words\n";
  }
  try {
    load_config_file(path);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }

  {
    std::ofstream f(path);
    f << "heads=two\n";
  }
  CHECK_THROWS_AS(load_config_file(path), DataError);
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_config_file("/tmp/daanet_absent_config.txt"), DataError);
}

TEST_CASE("task activity follows the mode") {
  ModelConfig c;
  c.mode = Mode::dual;
  CHECK(c.task_active(Task::qa));
  CHECK(c.task_active(Task::qg));
  c.mode = Mode::qa_only;
  CHECK(c.task_active(Task::qa));
  CHECK_FALSE(c.task_active(Task::qg));
  c.mode = Mode::qg_only;
  CHECK_FALSE(c.task_active(Task::qa));
  CHECK(c.task_active(Task::qg));

  CHECK(std::string(mode_name(parse_mode("qa-only"))) == "qa-only");
  CHECK(std::string(mode_name(parse_mode("qg-only"))) == "qg-only");
  CHECK(std::string(mode_name(parse_mode("dual"))) == "dual");
  CHECK_THROWS_AS(parse_mode("both"), DataError);
}

TEST_CASE("assembly shares parameters across tasks by default") {
  Model m(tiny_config(), tiny_vocab());
  const ParameterRegistry& reg = m.registry();

  CHECK(reg.at("qa.out.proj.W") == reg.at("qg.out.proj.W"));
  CHECK(reg.at("qa.out.proj.b") == reg.at("qg.out.proj.b"));
  CHECK(reg.at("qa.encoder.context.ffn.W_in") == reg.at("qg.encoder.context.ffn.W_in"));
  CHECK(reg.at("qa.encoder.question.lstm0.fwd.Wx") ==
        reg.at("qg.encoder.question.lstm0.fwd.Wx"));
  CHECK(reg.at("qa.encoder.answer.attn.R") == reg.at("qg.encoder.answer.attn.R"));

  // task heads stay separate
  CHECK(reg.at("qa.out.W1") != reg.at("qg.out.W1"));
  CHECK(reg.at("qa.out.gate_W") != reg.at("qg.out.gate_W"));

  // attention sites are distinct by default
  CHECK(reg.at("attn.context_question.U") != reg.at("attn.context_answer.U"));
  CHECK(reg.at("attn.answer_context.V") != reg.at("attn.question_context.V"));
  CHECK(m.warnings().empty());
}

TEST_CASE("unshare flags split the configured blocks") {
  ModelConfig c = tiny_config();
  c.unshare_output_projection = true;
  c.unshare_qa_encoders = true;
  Model m(c, tiny_vocab());
  const ParameterRegistry& reg = m.registry();

  CHECK(reg.at("qa.out.proj.W") != reg.at("qg.out.proj.W"));
  CHECK(reg.at("qa.encoder.question.ffn.W_in") != reg.at("qg.encoder.question.ffn.W_in"));
  CHECK(reg.at("qa.encoder.answer.ffn.W_in") != reg.at("qg.encoder.answer.ffn.W_in"));
  // the context encoder stays shared unless asked otherwise
  CHECK(reg.at("qa.encoder.context.ffn.W_in") == reg.at("qg.encoder.context.ffn.W_in"));

  ModelConfig c2 = tiny_config();
  c2.unshare_context_encoder = true;
  Model m2(c2, tiny_vocab());
  CHECK(m2.registry().at("qa.encoder.context.ffn.W_in") !=
        m2.registry().at("qg.encoder.context.ffn.W_in"));
  CHECK(m2.registry().at("qa.encoder.question.ffn.W_in") ==
        m2.registry().at("qg.encoder.question.ffn.W_in"));
}

TEST_CASE("share_attention_uv collapses the four sites to two") {
  ModelConfig c = tiny_config();
  c.share_attention_uv = true;
  Model m(c, tiny_vocab());
  const ParameterRegistry& reg = m.registry();

  CHECK(reg.at("attn.context_question.U") == reg.at("attn.fold_first.U"));
  CHECK(reg.at("attn.context_answer.U") == reg.at("attn.fold_first.U"));
  CHECK(reg.at("attn.question_context.V") == reg.at("attn.fold_second.V"));
  CHECK(reg.at("attn.answer_context.V") == reg.at("attn.fold_second.V"));
  CHECK(reg.at("attn.fold_first.U") != reg.at("attn.fold_second.U"));
}

TEST_CASE("single-task models carry no parameters for the other task") {
  ModelConfig c = tiny_config();
  c.mode = Mode::qa_only;
  Model m(c, tiny_vocab());
  const ParameterRegistry& reg = m.registry();

  CHECK(reg.has("qa.out.W1"));
  CHECK_FALSE(reg.has("qg.out.W1"));
  CHECK(reg.has("qa.encoder.context.ffn.W_in"));
  CHECK_FALSE(reg.has("qg.encoder.context.ffn.W_in"));
  CHECK(reg.has("attn.context_question.U"));
  CHECK_FALSE(reg.has("attn.context_answer.U"));
  CHECK_THROWS_AS(m.task_params(Task::qg), DataError);

  ModelConfig noisy = c;
  noisy.unshare_output_projection = true;
  Model warned(noisy, tiny_vocab());
  CHECK_FALSE(warned.warnings().empty());
}

TEST_CASE("word embeddings freeze everything but the writable specials") {
  Model m(tiny_config(), tiny_vocab());
  const ParamPtr& word = m.embedding().word;
  CHECK(word->value.row(Vocabulary::kPad).isZero(0.0));
  REQUIRE(word->frozen_rows.size() == static_cast<std::size_t>(m.vocab().size()));
  for (int i = 0; i < m.vocab().size(); ++i) {
    bool writable = i == Vocabulary::kUnk || i == Vocabulary::kStart ||
                    i == Vocabulary::kEnd;
    CHECK(word->frozen_rows[static_cast<std::size_t>(i)] == (writable ? 0 : 1));
  }
  const ParamPtr& chars = m.embedding().chars;
  CHECK(chars->value.row(CharTable::kPadChar).isZero(0.0));
  CHECK(chars->frozen_rows[CharTable::kPadChar] == 1);
  CHECK(chars->frozen_rows[5] == 0);
}

TEST_CASE("training inputs give each task its own roles") {
  Triplet t = Triplet::make("x", "where is it", "the key is here", "here");
  ModelConfig c = tiny_config();
  Model m(c, tiny_vocab());

  DirectionInput qa = m.make_training_input(Task::qa, t);
  CHECK(qa.context == t.context_tokens);
  CHECK(qa.counterpart == t.question_tokens);
  CHECK(qa.gold == t.answer_tokens);
  REQUIRE(qa.prefix.size() == t.answer_tokens.size() + 1);
  CHECK(qa.prefix.front() == Vocabulary::start_token());
  CHECK(std::vector<std::string>(qa.prefix.begin() + 1, qa.prefix.end()) ==
        t.answer_tokens);

  DirectionInput qg = m.make_training_input(Task::qg, t);
  CHECK(qg.counterpart == t.answer_tokens);
  CHECK(qg.gold == t.question_tokens);
  CHECK(qg.prefix.front() == Vocabulary::start_token());
}

TEST_CASE("run_direction produces one distribution row per target") {
  Model m(tiny_config(), tiny_vocab());
  Triplet t = synthetic_qa_corpus().front();

  ad::Tape tape;
  DirectionOutputs out = m.run_direction(tape, Task::qa, m.make_training_input(Task::qa, t), false);

  Index steps = static_cast<Index>(t.answer_tokens.size()) + 1;
  const Matrix& p = tape.value(out.p_final);
  REQUIRE(p.rows() == steps);
  CHECK(p.cols() == out.ext.size());
  for (Index i = 0; i < p.rows(); ++i)
    CHECK(p.row(i).sum() == doctest::Approx(1.0).epsilon(1e-9));

  REQUIRE(static_cast<Index>(out.targets.size()) == steps);
  CHECK(out.targets.back() == Vocabulary::kEnd);

  const Matrix& cov = tape.value(out.coverage);
  CHECK(cov.rows() == steps);
  CHECK(cov.cols() == 1);
  CHECK(cov(0, 0) == 0.0);

  CHECK(std::isfinite(tape.value(out.loss)(0, 0)));
  CHECK(tape.value(out.nll)(0, 0) > 0.0);
  CHECK(out.lambda.valid());
  CHECK(out.scores1.valid());
}

TEST_CASE("no_copy keeps the plain vocabulary output space") {
  ModelConfig c = tiny_config();
  c.no_copy = true;
  Model m(c, tiny_vocab());
  Triplet t = synthetic_qa_corpus().front();

  ad::Tape tape;
  DirectionOutputs out = m.run_direction(tape, Task::qg, m.make_training_input(Task::qg, t), false);
  CHECK(tape.value(out.p_final).cols() == m.vocab().size());
  CHECK_FALSE(out.lambda.valid());
  CHECK(out.ext.size() == m.vocab().size());
  CHECK_FALSE(m.registry().has("qg.out.gate_W"));
}

TEST_CASE("no_context_attention drops the first fold") {
  ModelConfig c = tiny_config();
  c.no_context_attention = true;
  Model m(c, tiny_vocab());
  Triplet t = synthetic_qa_corpus().front();

  ad::Tape tape;
  DirectionOutputs out = m.run_direction(tape, Task::qa, m.make_training_input(Task::qa, t), false);
  CHECK_FALSE(out.scores1.valid());
  CHECK(out.scores2.valid());
  CHECK_FALSE(m.registry().has("attn.context_question.U"));
  // the fused context falls back to the raw context encoding
  CHECK(tape.value(out.fused_context) == tape.value(out.context_enc));
}

TEST_CASE("dual loss is the weighted sum of task losses") {
  ModelConfig c = tiny_config();
  c.qa_loss_weight = 0.5;
  c.qg_loss_weight = 2.0;
  Model m(c, tiny_vocab());
  Triplet t = synthetic_qa_corpus()[3];

  ad::Tape tape;
  TripletOutputs out = m.triplet_outputs(tape, t, false);
  REQUIRE(out.qa.has_value());
  REQUIRE(out.qg.has_value());
  Scalar qa_loss = tape.value(out.qa->loss)(0, 0);
  Scalar qg_loss = tape.value(out.qg->loss)(0, 0);
  CHECK(tape.value(out.loss)(0, 0) ==
        doctest::Approx(0.5 * qa_loss + 2.0 * qg_loss).epsilon(1e-12));
}

TEST_CASE("train_step lowers the loss on a tiny corpus") {
  ModelConfig c = tiny_config();
  c.lr_max = 5e-3;
  c.warmup_steps = 5;
  Model m(c, tiny_vocab());
  std::vector<Triplet> data = synthetic_qa_corpus();
  data.resize(4);

  AdamState state;
  TrainMetrics first = m.train_step(data, state);
  CHECK(first.step == 1);
  CHECK(first.grad_norm > 0.0);
  CHECK(first.lr > 0.0);
  CHECK(first.qa_tokens > 0);
  CHECK(first.qg_tokens > 0);

  TrainMetrics last = first;
  for (int i = 0; i < 29; ++i) last = m.train_step(data, state);
  CHECK(last.step == 30);
  CHECK(last.loss < first.loss);

  CHECK_THROWS_AS(m.train_step({}, state), DataError);
}

TEST_CASE("decode respects the cap and records a trace") {
  ModelConfig c = tiny_config();
  c.decode_cap = 4;
  Model m(c, tiny_vocab());
  Triplet t = synthetic_qa_corpus().front();

  DecodeTrace trace;
  std::vector<std::string> out = m.decode(Task::qa, t, &trace);
  CHECK(out.size() <= 4);
  CHECK(trace.step_rows.size() >= out.size());
  CHECK(trace.step_rows.size() <= 5);
  REQUIRE(trace.fold2_scores.rows() >= 1);
  CHECK(trace.fold2_scores.cols() == static_cast<Index>(t.context_tokens.size()));
  CHECK(trace.fold1_scores.rows() == static_cast<Index>(t.context_tokens.size()));

  // decoding is deterministic outside training
  CHECK(m.decode(Task::qa, t) == out);
}

TEST_CASE("batch stream covers every example each epoch") {
  std::vector<Triplet> data = random_token_triplets(10, 5);
  BatchStream stream(data, 3, 42);
  CHECK(stream.size() == 10);

  std::multiset<std::string> seen;
  std::vector<std::size_t> batch_sizes;
  for (int i = 0; i < 4; ++i) {
    std::vector<Triplet> b = stream.next();
    batch_sizes.push_back(b.size());
    for (const Triplet& t : b) seen.insert(t.id);
  }
  CHECK(batch_sizes == std::vector<std::size_t>{3, 3, 3, 1});
  CHECK(stream.epoch() == 0);
  CHECK(seen.size() == 10);
  for (const Triplet& t : data) CHECK(seen.count(t.id) == 1);
  stream.next();
  CHECK(stream.epoch() == 1);

  BatchStream a(data, 4, 7), b(data, 4, 7);
  for (int i = 0; i < 6; ++i) {
    std::vector<Triplet> ba = a.next(), bb = b.next();
    REQUIRE(ba.size() == bb.size());
    for (std::size_t j = 0; j < ba.size(); ++j) CHECK(ba[j].id == bb[j].id);
  }
}

TEST_CASE("vocabulary corpus lists question, context, and answer") {
  std::vector<Triplet> data = random_token_triplets(4, 9);
  std::vector<std::vector<std::string>> corpus = vocabulary_corpus(data);
  REQUIRE(corpus.size() == 12);
  CHECK(corpus[0] == data[0].question_tokens);
  CHECK(corpus[1] == data[0].context_tokens);
  CHECK(corpus[2] == data[0].answer_tokens);
}

TEST_CASE("checkpoints round trip byte for byte") {
  ModelConfig c = tiny_config();
  c.share_attention_uv = true;
  Model m(c, tiny_vocab());
  std::vector<Triplet> data = synthetic_qa_corpus();
  data.resize(3);
  AdamState state;
  m.train_step(data, state);
  m.train_step(data, state);

  Triplet probe = data[0];
  std::vector<std::string> before = m.decode(Task::qg, probe);

  std::string p1 = "/tmp/daanet_test_ckpt1.bin";
  std::string p2 = "/tmp/daanet_test_ckpt2.bin";
  save_checkpoint(p1, m, state);

  LoadedCheckpoint loaded = load_checkpoint(p1);
  CHECK(loaded.state.step == 2);
  CHECK(loaded.model->config().to_kv() == m.config().to_kv());
  CHECK(loaded.model->vocab().tokens() == m.vocab().tokens());

  for (const auto& [name, p] : m.registry().physical()) {
    ParamPtr q = loaded.model->registry().at(name);
    CHECK(q->value == p->value);
    CHECK(q->frozen_rows == p->frozen_rows);
  }
  for (const auto& [name, mv] : state.moments) {
    const auto& lv = loaded.state.moments.at(name);
    CHECK(lv.first == mv.first);
    CHECK(lv.second == mv.second);
  }

  // sharing survives the rebuild
  CHECK(loaded.model->registry().at("qa.out.proj.W") ==
        loaded.model->registry().at("qg.out.proj.W"));
  CHECK(loaded.model->registry().at("attn.context_answer.U") ==
        loaded.model->registry().at("attn.fold_first.U"));

  CHECK(loaded.model->decode(Task::qg, probe) == before);

  save_checkpoint(p2, *loaded.model, loaded.state);
  CHECK(file_bytes(p1) == file_bytes(p2));
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("checkpoint corruption is detected") {
  Model m(tiny_config(), tiny_vocab());
  AdamState state;
  std::string path = "/tmp/daanet_test_ckpt_corrupt.bin";
  save_checkpoint(path, m, state);

  std::string bytes = file_bytes(path);
  std::string flipped = bytes;
  flipped[flipped.size() / 2] = static_cast<char>(flipped[flipped.size() / 2] ^ 0x40);
  {
    std::ofstream out(path, std::ios::binary);
    out.write(flipped.data(), static_cast<std::streamsize>(flipped.size()));
  }
  CHECK_THROWS_AS(load_checkpoint(path), DataError);

  {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 3));
  }
  CHECK_THROWS_AS(load_checkpoint(path), DataError);
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_checkpoint("/tmp/daanet_absent_ckpt.bin"), DataError);
}

TEST_CASE("fixed seeds reproduce assembly and training") {
  std::vector<Triplet> data = synthetic_qa_corpus();
  data.resize(3);

  Model a(tiny_config(), tiny_vocab());
  Model b(tiny_config(), tiny_vocab());
  for (const auto& [name, p] : a.registry().physical())
    CHECK(b.registry().at(name)->value == p->value);

  AdamState sa, sb;
  for (int i = 0; i < 3; ++i) {
    TrainMetrics ma = a.train_step(data, sa);
    TrainMetrics mb = b.train_step(data, sb);
    CHECK(ma.loss == mb.loss);
    CHECK(ma.grad_norm == mb.grad_norm);
  }
  for (const auto& [name, p] : a.registry().physical())
    CHECK(b.registry().at(name)->value == p->value);

  ModelConfig other = tiny_config();
  other.seed = 12;
  Model diff(other, tiny_vocab());
  CHECK(diff.registry().at("embedding.H1")->value != a.registry().at("embedding.H1")->value);
}
