#pragma once

#include "daanet/types.hpp"

#include <string>
#include <utility>
#include <vector>

namespace daanet {

using TokenSeq = std::vector<std::string>;

/// Sentence BLEU with clipped n-gram precision up to max_n, geometric mean,
/// and brevity penalty exp(min(0, 1 - |ref| / |cand|)). No smoothing: any
/// zero precision gives 0. An empty candidate gives 0.
Scalar bleu(const TokenSeq& candidate, const TokenSeq& reference, int max_n = 4);

/// Corpus BLEU: clipped counts, totals, and lengths pooled over pairs before
/// combining.
Scalar corpus_bleu(const std::vector<std::pair<TokenSeq, TokenSeq>>& pairs,
                   int max_n = 4);

/// LCS-based F-score: P = LCS/|cand|, R = LCS/|ref|,
/// F = (1 + beta^2) P R / (R + beta^2 P). Zero denominators give 0.
Scalar rouge_l(const TokenSeq& candidate, const TokenSeq& reference,
               Scalar beta = 1.0);

}  // namespace daanet
