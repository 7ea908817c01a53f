#pragma once

#include "daanet/metrics.hpp"
#include "daanet/model.hpp"

#include <string>
#include <vector>

namespace daanet {

struct TaskReport {
  bool active = false;
  long count = 0;
  Scalar bleu1 = 0.0, bleu2 = 0.0, bleu3 = 0.0, bleu4 = 0.0;
  Scalar rouge = 0.0;
  Scalar exact_match = 0.0;
  Scalar token_nll = 0.0;
};

struct EvalReport {
  TaskReport qa, qg;
};

/// Greedy-decodes every example for one task; fans out over threads when
/// asked. Order matches the input order.
std::vector<std::vector<std::string>> decode_all(Model& model, Task task,
                                                 const std::vector<Triplet>& data,
                                                 int threads = 1);

/// Teacher-forced negative log likelihood per gold token, averaged over the
/// whole set.
Scalar mean_token_nll(Model& model, Task task, const std::vector<Triplet>& data);

/// Fraction of decodes that equal the gold token sequence exactly.
Scalar exact_match_rate(const std::vector<std::vector<std::string>>& decoded,
                        const std::vector<std::vector<std::string>>& gold);

struct EvalOptions {
  int threads = 1;
  bool corpus_bleu = false;  // pooled counts instead of the per-pair macro average
  Scalar rouge_beta = 1.0;
};

/// Decodes and scores every active task of the model.
EvalReport evaluate(Model& model, const std::vector<Triplet>& data,
                    const EvalOptions& opts = {});

/// Fixed-width table, one row per active task; metric columns are
/// percentages with two decimals.
std::string format_report(const EvalReport& report);

}  // namespace daanet
