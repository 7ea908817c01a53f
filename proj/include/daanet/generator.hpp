#pragma once

#include "daanet/tape.hpp"
#include "daanet/vocab.hpp"

#include <string>
#include <unordered_map>
#include <vector>

namespace daanet {

inline constexpr Index kGenHidden = 1024;

/// Output head of one task. gate_W/gate_b are null when the copy path is
/// disabled; proj_W/proj_b may be shared across tasks.
struct GeneratorParams {
  ParamPtr W1, b1;          // d_enc x kGenHidden, 1 x kGenHidden
  ParamPtr gate_W, gate_b;  // 2 d_enc x 1, 1 x 1
  ParamPtr proj_W, proj_b;  // kGenHidden x |V|, 1 x |V|
};

/// Vocabulary ids extended with the distinct out-of-vocabulary words of one
/// context, in first-appearance order.
struct ExtendedSpace {
  int vocab_size = 0;
  std::vector<std::string> oov_tokens;
  std::unordered_map<std::string, int> oov_index;
  std::vector<int> context_ext_ids;  // per context position

  static ExtendedSpace build(const Vocabulary& vocab,
                             const std::vector<std::string>& context_tokens);
  int size() const { return vocab_size + static_cast<int>(oov_tokens.size()); }
  /// Extended id a gold token should be scored against: vocabulary id when
  /// known, the context OOV id when copyable, UNK otherwise.
  int target_id(const Vocabulary& vocab, const std::string& token) const;
  const std::string& surface(const Vocabulary& vocab, int ext_id) const;
};

/// softmax(tanh(d W1 + b1) proj_W + proj_b) over the fixed vocabulary,
/// one row per step.
ad::Var vocab_distribution(ad::Tape& tape, ad::Var d_rows, const GeneratorParams& g);

/// 0/1 matrix (context length x extended size) that sums attention mass per
/// extended id; right-multiplying score rows by it merges duplicate words.
Matrix context_merge_matrix(const std::vector<int>& context_ext_ids, Index ext_size);

/// Reference scatter of one score row onto the extended space; the model path
/// uses context_merge_matrix, which must agree with this.
std::vector<Scalar> context_distribution(const Matrix& score_row,
                                         const std::vector<int>& context_ext_ids,
                                         Index ext_size);

/// lambda = sigmoid([d_rows, prefix_rows] gate_W + gate_b), one value per step.
ad::Var mixture_gate(ad::Tape& tape, ad::Var d_rows, ad::Var prefix_rows,
                     const GeneratorParams& g);

/// lambda * p_vocab (zero-padded to the extended width) + (1 - lambda) * p_context.
ad::Var final_distribution(ad::Var lambda, ad::Var p_vocab, ad::Var p_context);

/// Standalone forward of the per-step coverage penalty at 1-based step t:
/// sum_j min(scores(t-1, j), sum_{t'<t} scores(t'-1, j)). Step 1 gives 0.
Scalar coverage_penalty(const Matrix& scores, int step);

}  // namespace daanet
