#include "daanet/generator.hpp"

namespace daanet {

using ad::Var;

ExtendedSpace ExtendedSpace::build(const Vocabulary& vocab,
                                   const std::vector<std::string>& context_tokens) {
  ExtendedSpace ext;
  ext.vocab_size = vocab.size();
  ext.context_ext_ids.reserve(context_tokens.size());
  for (const std::string& tok : context_tokens) {
    if (vocab.contains(tok)) {
      ext.context_ext_ids.push_back(vocab.id(tok));
      continue;
    }
    auto it = ext.oov_index.find(tok);
    int id;
    if (it == ext.oov_index.end()) {
      id = ext.vocab_size + static_cast<int>(ext.oov_tokens.size());
      ext.oov_index.emplace(tok, id);
      ext.oov_tokens.push_back(tok);
    } else {
      id = it->second;
    }
    ext.context_ext_ids.push_back(id);
  }
  return ext;
}

int ExtendedSpace::target_id(const Vocabulary& vocab, const std::string& token) const {
  if (vocab.contains(token)) return vocab.id(token);
  auto it = oov_index.find(token);
  return it == oov_index.end() ? Vocabulary::kUnk : it->second;
}

const std::string& ExtendedSpace::surface(const Vocabulary& vocab, int ext_id) const {
  if (ext_id < vocab_size) return vocab.token(ext_id);
  int k = ext_id - vocab_size;
  if (k >= static_cast<int>(oov_tokens.size()))
    throw NumericError("extended space: id out of range");
  return oov_tokens[static_cast<std::size_t>(k)];
}

Var vocab_distribution(ad::Tape& tape, Var d_rows, const GeneratorParams& g) {
  Var hidden = ad::tanh_of(
      ad::add_rowvec(ad::matmul(d_rows, tape.leaf(g.W1)), tape.leaf(g.b1)));
  Var logits =
      ad::add_rowvec(ad::matmul(hidden, tape.leaf(g.proj_W)), tape.leaf(g.proj_b));
  return ad::softmax_rows(logits);
}

Matrix context_merge_matrix(const std::vector<int>& context_ext_ids, Index ext_size) {
  Matrix m = Matrix::Zero(static_cast<Index>(context_ext_ids.size()), ext_size);
  for (std::size_t p = 0; p < context_ext_ids.size(); ++p) {
    int id = context_ext_ids[p];
    if (id < 0 || id >= ext_size)
      throw NumericError("context_merge_matrix: id out of range");
    m(static_cast<Index>(p), id) = 1.0;
  }
  return m;
}

std::vector<Scalar> context_distribution(const Matrix& score_row,
                                         const std::vector<int>& context_ext_ids,
                                         Index ext_size) {
  if (score_row.rows() != 1 ||
      score_row.cols() != static_cast<Index>(context_ext_ids.size()))
    throw NumericError("context_distribution: row shape mismatch");
  std::vector<Scalar> out(static_cast<std::size_t>(ext_size), 0.0);
  for (std::size_t p = 0; p < context_ext_ids.size(); ++p)
    out[static_cast<std::size_t>(context_ext_ids[p])] += score_row(0, static_cast<Index>(p));
  return out;
}

Var mixture_gate(ad::Tape& tape, Var d_rows, Var prefix_rows,
                 const GeneratorParams& g) {
  if (!g.gate_W || !g.gate_b) throw NumericError("mixture_gate: copy path disabled");
  Var joint = ad::concat_cols({d_rows, prefix_rows});
  return ad::sigmoid(
      ad::add_rowvec(ad::matmul(joint, tape.leaf(g.gate_W)), tape.leaf(g.gate_b)));
}

Var final_distribution(Var lambda, Var p_vocab, Var p_context) {
  if (!lambda.valid()) throw NumericError("final_distribution: invalid gate");
  ad::Tape& tape = *lambda.tape;
  Index ext = tape.value(p_context).cols();
  Var vocab_part = ad::mul_colvec(ad::pad_cols(p_vocab, ext), lambda);
  Var one_minus = ad::add_const(ad::scale(lambda, -1.0), 1.0);
  Var context_part = ad::mul_colvec(p_context, one_minus);
  return ad::add(vocab_part, context_part);
}

Scalar coverage_penalty(const Matrix& scores, int step) {
  if (step < 1 || step > scores.rows())
    throw NumericError("coverage_penalty: step out of range");
  Index t = step - 1;
  Eigen::Array<Scalar, 1, Eigen::Dynamic> cum =
      Eigen::Array<Scalar, 1, Eigen::Dynamic>::Zero(scores.cols());
  for (Index i = 0; i < t; ++i) cum += scores.row(i).array();
  return scores.row(t).array().min(cum).sum();
}

}  // namespace daanet
