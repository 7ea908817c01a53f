#include "daanet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace daanet {

namespace {

using NgramCounts = std::map<std::vector<std::string>, long>;

NgramCounts ngram_counts(const TokenSeq& seq, int n) {
  NgramCounts out;
  if (static_cast<int>(seq.size()) < n) return out;
  for (std::size_t i = 0; i + n <= seq.size(); ++i)
    ++out[std::vector<std::string>(seq.begin() + i, seq.begin() + i + n)];
  return out;
}

struct ClippedCounts {
  long matched = 0;
  long total = 0;
};

ClippedCounts clipped(const TokenSeq& cand, const TokenSeq& ref, int n) {
  ClippedCounts c;
  NgramCounts cc = ngram_counts(cand, n);
  NgramCounts rc = ngram_counts(ref, n);
  for (const auto& [gram, count] : cc) {
    c.total += count;
    auto it = rc.find(gram);
    if (it != rc.end()) c.matched += std::min(count, it->second);
  }
  return c;
}

Scalar brevity_penalty(long cand_len, long ref_len) {
  if (cand_len <= 0) return 0.0;
  return std::exp(std::min(
      0.0, 1.0 - static_cast<Scalar>(ref_len) / static_cast<Scalar>(cand_len)));
}

// Orders with no candidate n-grams are skipped so an identical short pair
// still scores 1; a genuine zero precision collapses the score (no smoothing).
Scalar combine(const std::vector<ClippedCounts>& per_n, long cand_len, long ref_len) {
  Scalar log_sum = 0.0;
  int orders = 0;
  for (const ClippedCounts& c : per_n) {
    if (c.total == 0) continue;
    if (c.matched == 0) return 0.0;
    log_sum += std::log(static_cast<Scalar>(c.matched) / static_cast<Scalar>(c.total));
    ++orders;
  }
  if (orders == 0) return 0.0;
  Scalar geo = std::exp(log_sum / static_cast<Scalar>(orders));
  return brevity_penalty(cand_len, ref_len) * geo;
}

std::size_t lcs_length(const TokenSeq& a, const TokenSeq& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      if (a[i - 1] == b[j - 1])
        cur[j] = prev[j - 1] + 1;
      else
        cur[j] = std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

Scalar bleu(const TokenSeq& candidate, const TokenSeq& reference, int max_n) {
  if (max_n < 1) throw NumericError("bleu: max_n must be at least 1");
  if (candidate.empty()) return 0.0;
  std::vector<ClippedCounts> per_n;
  for (int n = 1; n <= max_n; ++n) per_n.push_back(clipped(candidate, reference, n));
  return combine(per_n, static_cast<long>(candidate.size()),
                 static_cast<long>(reference.size()));
}

Scalar corpus_bleu(const std::vector<std::pair<TokenSeq, TokenSeq>>& pairs,
                   int max_n) {
  if (max_n < 1) throw NumericError("bleu: max_n must be at least 1");
  std::vector<ClippedCounts> per_n(static_cast<std::size_t>(max_n));
  long cand_len = 0, ref_len = 0;
  for (const auto& [cand, ref] : pairs) {
    cand_len += static_cast<long>(cand.size());
    ref_len += static_cast<long>(ref.size());
    for (int n = 1; n <= max_n; ++n) {
      ClippedCounts c = clipped(cand, ref, n);
      per_n[static_cast<std::size_t>(n - 1)].matched += c.matched;
      per_n[static_cast<std::size_t>(n - 1)].total += c.total;
    }
  }
  if (cand_len == 0) return 0.0;
  return combine(per_n, cand_len, ref_len);
}

Scalar rouge_l(const TokenSeq& candidate, const TokenSeq& reference, Scalar beta) {
  if (candidate.empty() || reference.empty()) return 0.0;
  Scalar lcs = static_cast<Scalar>(lcs_length(candidate, reference));
  if (lcs == 0.0) return 0.0;
  Scalar p = lcs / static_cast<Scalar>(candidate.size());
  Scalar r = lcs / static_cast<Scalar>(reference.size());
  Scalar denom = r + beta * beta * p;
  if (denom == 0.0) return 0.0;
  return (1.0 + beta * beta) * p * r / denom;
}

}  // namespace daanet
