#include "daanet/embedding.hpp"
#include "daanet/init.hpp"
#include "daanet/vocab.hpp"

#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>

using namespace daanet;

namespace {

ParamPtr zeros(Index r, Index c) {
  auto p = std::make_shared<Parameter>();
  p->value = Matrix::Zero(r, c);
  return p;
}

EmbeddingParams tiny_embedding(Index d_word, Index d_char, Index d_model,
                               Index vocab_rows) {
  EmbeddingParams e;
  e.cfg = {d_word, d_char, d_model, false};
  e.word = zeros(vocab_rows, d_word);
  e.chars = zeros(CharTable::size(), d_char);
  e.conv = zeros(3 * d_char, d_char);
  e.H1 = zeros(d_word + d_char, d_model);
  e.H2 = zeros(d_model, d_model);
  e.H3 = zeros(d_model, d_model);
  e.v1 = zeros(1, 1);
  e.v2 = zeros(1, 1);
  e.v3 = zeros(1, 1);
  return e;
}

}  // namespace

TEST_CASE("vocabulary keeps counted tokens ordered by count then name") {
  std::vector<std::vector<std::string>> corpus = {
      {"bird", "cat", "cat", "dog"}, {"dog", "cat", "ant", "dog"}};
  Vocabulary v = Vocabulary::build(corpus, 2);
  // cat and dog appear 3 times, ant and bird once
  CHECK(v.size() == Vocabulary::kSpecials + 2);
  CHECK(v.token(Vocabulary::kSpecials) == "cat");
  CHECK(v.token(Vocabulary::kSpecials + 1) == "dog");
  CHECK(v.id("cat") == Vocabulary::kSpecials);
  CHECK(v.id("ant") == Vocabulary::kUnk);
  CHECK(v.contains("dog"));
  CHECK(!v.contains("ant"));
  CHECK(v.token(Vocabulary::kPad) == Vocabulary::pad_token());
  CHECK(v.token(Vocabulary::kEnd) == Vocabulary::end_token());
  CHECK_THROWS_AS(v.token(v.size()), DataError);
  CHECK_THROWS_AS(v.token(-1), DataError);
}

TEST_CASE("vocabulary ties break lexicographically") {
  std::vector<std::vector<std::string>> corpus = {{"zeta", "echo", "zeta", "echo"}};
  Vocabulary v = Vocabulary::build(corpus, 1);
  CHECK(v.token(Vocabulary::kSpecials) == "echo");
  CHECK(v.token(Vocabulary::kSpecials + 1) == "zeta");
}

TEST_CASE("vocabulary rebuild from token list") {
  Vocabulary v = Vocabulary::from_tokens({"one", "two", "three"});
  CHECK(v.size() == 7);
  CHECK(v.id("two") == 5);
  CHECK(v.tokens() == std::vector<std::string>{"one", "two", "three"});
  CHECK_THROWS_AS(Vocabulary::from_tokens({"dup", "dup"}), DataError);

  Vocabulary built =
      Vocabulary::build({{"beta", "beta", "alpha", "alpha", "alpha"}}, 1);
  Vocabulary round = Vocabulary::from_tokens(built.tokens());
  CHECK(round.size() == built.size());
  CHECK(round.id("beta") == built.id("beta"));
}

TEST_CASE("character table covers printable ascii") {
  CHECK(CharTable::char_id(' ') == 2);
  CHECK(CharTable::char_id('~') == 96);
  CHECK(CharTable::char_id('a') == 2 + 'a' - 32);
  CHECK(CharTable::char_id('\n') == CharTable::kUnkChar);
  CHECK(CharTable::char_id(0xc3) == CharTable::kUnkChar);
  CHECK(CharTable::size() == 97);

  auto ids = word_char_ids("ab");
  CHECK(ids[0] == CharTable::char_id('a'));
  CHECK(ids[1] == CharTable::char_id('b'));
  CHECK(ids[2] == CharTable::kPadChar);
  CHECK(ids[15] == CharTable::kPadChar);

  auto longword = word_char_ids("abcdefghijklmnopqrstuvwxyz");
  CHECK(longword[15] == CharTable::char_id('p'));
}

TEST_CASE("embedded sequence has one row per token") {
  EmbeddingParams e = tiny_embedding(4, 3, 5, 10);
  std::mt19937_64 rng(3);
  for (ParamPtr p : {e.word, e.chars, e.conv, e.H1, e.H2, e.H3})
    p->value = fan_avg_init(p->value.rows(), p->value.cols(), rng);
  ad::Tape tape;
  std::vector<std::string> toks = {"aa", "bb", "cc"};
  ad::Var out = embed_sequence(tape, e, {4, 5, 6}, char_ids_of(toks));
  CHECK(tape.value(out).rows() == 3);
  CHECK(tape.value(out).cols() == 5);

  CHECK_THROWS_AS(embed_sequence(tape, e, {}, {}), NumericError);
}

TEST_CASE("char convolution sums each width-3 window before max pooling") {
  // d_char=1, zero word vector: e = char feature through H1. With the gate
  // pushed to 0, the output is e * H3, so the pooled window value is exposed.
  EmbeddingParams e = tiny_embedding(1, 1, 1, 6);
  e.chars->value(CharTable::char_id('a'), 0) = 1.0;
  e.chars->value(CharTable::char_id('b'), 0) = 2.0;
  e.conv->value << 1.0, 1.0, 1.0;  // previous + center + next
  e.H1->value << 0.0, 1.0;         // picks the char column
  e.v2->value(0, 0) = -50.0;       // gate ~ 0
  e.H3->value(0, 0) = 2.0;

  ad::Tape tape;
  ad::Var out = embed_sequence(tape, e, {4}, char_ids_of({"ab"}));
  // windows: [0,1,2]=3, [1,2,0]=3, [2,0,0]=2, pads 0; max = 3; gate picks 2*3
  CHECK(tape.value(out)(0, 0) == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("highway gate blends projection and carry") {
  EmbeddingParams e = tiny_embedding(1, 1, 1, 6);
  e.word->value(4, 0) = 0.7;
  e.H1->value << 1.0, 1.0;  // e = word + char = 0.7
  e.H3->value(0, 0) = 3.0;
  e.v3->value(0, 0) = 0.1;  // alt = 2.2

  ad::Tape tape;
  SUBCASE("gate saturated open keeps the carry") {
    e.v2->value(0, 0) = 50.0;
    ad::Var out = embed_sequence(tape, e, {4}, char_ids_of({"x"}));
    // chars row for 'x' is zero, so the feature is 0 and e stays 0.7
    CHECK(tape.value(out)(0, 0) == doctest::Approx(0.7).epsilon(1e-12));
  }
  SUBCASE("gate saturated closed takes the transform") {
    e.v2->value(0, 0) = -50.0;
    ad::Var out = embed_sequence(tape, e, {4}, char_ids_of({"x"}));
    CHECK(tape.value(out)(0, 0) == doctest::Approx(2.2).epsilon(1e-12));
  }
  SUBCASE("mid gate is the exact convex blend") {
    e.v2->value(0, 0) = 0.25;
    ad::Var out = embed_sequence(tape, e, {4}, char_ids_of({"x"}));
    Scalar g = 1.0 / (1.0 + std::exp(-0.25));
    CHECK(tape.value(out)(0, 0) ==
          doctest::Approx(g * 0.7 + (1.0 - g) * 2.2).epsilon(1e-12));
  }
}

TEST_CASE("row-vector highway biases broadcast per dimension") {
  EmbeddingParams e = tiny_embedding(2, 2, 3, 6);
  e.cfg.vector_bias = true;
  e.v1 = zeros(1, 3);
  e.v2 = zeros(1, 3);
  e.v3 = zeros(1, 3);
  e.v1->value << 0.1, 0.2, 0.3;
  e.v2->value << 50.0, 50.0, 50.0;
  ad::Tape tape;
  ad::Var out = embed_sequence(tape, e, {4}, char_ids_of({"x"}));
  // all weights zero: e reduces to v1, the open gate carries it through
  CHECK(tape.value(out)(0, 0) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(tape.value(out)(0, 2) == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("pretrained vectors fill matching rows only") {
  Vocabulary v = Vocabulary::build({{"cat", "cat", "dog", "dog"}}, 1);
  Parameter word;
  word.value = Matrix::Zero(v.size(), 3);

  std::string path = "/tmp/daanet_test_vectors.txt";
  {
    std::ofstream f(path);
    f << "cat 1 2 3\n";
    f << "emu 9 9 9\n";
    f << "<unk> 5 5 5\n";
  }
  int found = load_word_embeddings(path, v, word);
  CHECK(found == 1);
  CHECK(word.value(v.id("cat"), 0) == 1.0);
  CHECK(word.value(v.id("cat"), 2) == 3.0);
  CHECK(word.value(v.id("dog"), 0) == 0.0);
  CHECK(word.value(Vocabulary::kUnk, 0) == 0.0);

  {
    std::ofstream f(path);
    f << "cat 1 2 3\n";
    f << "dog 1 2\n";
  }
  try {
    load_word_embeddings(path, v, word);
    FAIL("short line was accepted");
  } catch (const DataError& err) {
    CHECK(std::string(err.what()).find("line 2") != std::string::npos);
  }
  {
    std::ofstream f(path);
    f << "cat 1 2 x\n";
  }
  CHECK_THROWS_AS(load_word_embeddings(path, v, word), DataError);
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_word_embeddings("/tmp/daanet_absent.txt", v, word), DataError);
}
