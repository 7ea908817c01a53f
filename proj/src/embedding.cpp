#include "daanet/embedding.hpp"

#include <fstream>
#include <sstream>

namespace daanet {

using ad::Var;

namespace {

Var bias_add(ad::Tape& tape, Var x, const ParamPtr& v) {
  Var b = tape.leaf(v);
  return v->value.cols() == 1 ? ad::add_scalar(x, b) : ad::add_rowvec(x, b);
}

Var one_minus(Var x) { return ad::add_const(ad::scale(x, -1.0), 1.0); }

/// Width-3 convolution over the 16 character rows of one token followed by
/// max-over-time, giving a single 1 x d_char feature row.
Var char_features(ad::Tape& tape, const EmbeddingParams& p, Var char_rows) {
  Var windows = ad::concat_cols({ad::shift_rows(char_rows, -1), char_rows,
                                 ad::shift_rows(char_rows, +1)});
  Var conv = ad::matmul(windows, tape.leaf(p.conv));
  return ad::col_max(conv);
}

}  // namespace

Var embed_sequence(ad::Tape& tape, const EmbeddingParams& params,
                   const std::vector<int>& word_ids,
                   const std::vector<std::array<int, kMaxWordChars>>& char_ids) {
  if (word_ids.empty()) throw NumericError("embed_sequence: empty sequence");
  if (word_ids.size() != char_ids.size())
    throw NumericError("embed_sequence: word/char length mismatch");

  Var words = ad::gather_rows(tape.leaf(params.word),
                              std::vector<int>(word_ids.begin(), word_ids.end()));

  Var char_table = tape.leaf(params.chars);
  std::vector<Var> per_token;
  per_token.reserve(char_ids.size());
  for (const auto& ids : char_ids) {
    Var rows = ad::gather_rows(char_table, std::vector<int>(ids.begin(), ids.end()));
    per_token.push_back(char_features(tape, params, rows));
  }
  Var chars = ad::concat_rows(per_token);

  Var e = bias_add(tape, ad::matmul(ad::concat_cols({words, chars}), tape.leaf(params.H1)),
                   params.v1);
  Var g = ad::sigmoid(bias_add(tape, ad::matmul(e, tape.leaf(params.H2)), params.v2));
  Var alt = bias_add(tape, ad::matmul(e, tape.leaf(params.H3)), params.v3);
  return ad::add(ad::mul(g, e), ad::mul(one_minus(g), alt));
}

std::vector<int> word_ids_of(const Vocabulary& vocab,
                             const std::vector<std::string>& tokens) {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(vocab.id(t));
  return out;
}

std::vector<std::array<int, kMaxWordChars>> char_ids_of(
    const std::vector<std::string>& tokens) {
  std::vector<std::array<int, kMaxWordChars>> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(word_char_ids(t));
  return out;
}

int load_word_embeddings(const std::string& path, const Vocabulary& vocab,
                         Parameter& word) {
  std::ifstream in(path);
  if (!in) throw DataError("embeddings: cannot open " + path);
  Index d_word = word.value.cols();
  std::string line;
  int found = 0;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string token;
    ls >> token;
    std::vector<Scalar> vals;
    Scalar v;
    while (ls >> v) vals.push_back(v);
    if (!ls.eof() || static_cast<Index>(vals.size()) != d_word)
      throw DataError("embeddings: malformed line " + std::to_string(line_no) +
                      " in " + path);
    if (!vocab.contains(token)) continue;
    int id = vocab.id(token);
    if (id < Vocabulary::kSpecials) continue;  // specials stay trainable
    for (Index j = 0; j < d_word; ++j) word.value(id, j) = vals[static_cast<std::size_t>(j)];
    ++found;
  }
  return found;
}

}  // namespace daanet
