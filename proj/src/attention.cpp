#include "daanet/attention.hpp"

#include <cmath>

namespace daanet {

using ad::Var;

Var bilinear_scores(ad::Tape& tape, Var x, Var y, const AttnSiteParams& site) {
  if (!site.U || !site.V) throw NumericError("bilinear_scores: missing projections");
  const Matrix& X = tape.value(x);
  const Matrix& Y = tape.value(y);
  if (X.cols() != Y.cols()) throw NumericError("bilinear_scores: width mismatch");
  if (site.U->value.rows() != X.cols() || site.V->value.rows() != Y.cols() ||
      site.U->value.cols() != site.V->value.cols())
    throw NumericError("bilinear_scores: projection shape mismatch");
  Var xu = ad::matmul(x, tape.leaf(site.U));
  Var yv = ad::matmul(y, tape.leaf(site.V));
  Var logits =
      ad::scale(ad::matmul_nt(xu, yv), 1.0 / std::sqrt(static_cast<Scalar>(X.cols())));
  return ad::softmax_rows(logits);
}

ScoredFold attend(ad::Tape& tape, Var x, Var y, const AttnSiteParams& site) {
  ScoredFold out;
  out.scores = bilinear_scores(tape, x, y, site);
  out.folded = ad::matmul(out.scores, y);
  return out;
}

}  // namespace daanet
