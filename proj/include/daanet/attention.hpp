#pragma once

#include "daanet/tape.hpp"

namespace daanet {

struct AttnSiteParams {
  ParamPtr U, V;  // d_enc x d_prime each
};

struct ScoredFold {
  ad::Var scores;  // rows of x against rows of y, row-softmaxed
  ad::Var folded;  // scores * y
};

/// softmax_rows((X U)(Y V)^T / sqrt(d_enc)); the scaling uses the input
/// width, not the projection width.
ad::Var bilinear_scores(ad::Tape& tape, ad::Var x, ad::Var y,
                        const AttnSiteParams& site);

/// Scores x against y and folds y through them. Both fusion steps are this
/// one operation applied to different arguments.
ScoredFold attend(ad::Tape& tape, ad::Var x, ad::Var y, const AttnSiteParams& site);

/// First step: fold the counterpart sequence into the context.
inline ScoredFold fold_first(ad::Tape& tape, ad::Var context, ad::Var counterpart,
                             const AttnSiteParams& site) {
  return attend(tape, context, counterpart, site);
}

/// Second step: fold the fused context into the generated-side prefix rows.
inline ScoredFold fold_second(ad::Tape& tape, ad::Var prefix, ad::Var fused_context,
                              const AttnSiteParams& site) {
  return attend(tape, prefix, fused_context, site);
}

}  // namespace daanet
