#pragma once

#include "daanet/types.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace daanet {

/// Lowercases ASCII, splits on whitespace, and breaks punctuation characters
/// into single-character tokens. Bytes outside ASCII are kept inside words.
std::vector<std::string> tokenize(std::string_view text);

/// One question-context-answer example. Token fields are always exactly
/// tokenize() of the raw fields.
struct Triplet {
  std::string id;
  std::string question, context, answer;
  std::vector<std::string> question_tokens, context_tokens, answer_tokens;

  static Triplet make(std::string id, std::string question, std::string context,
                      std::string answer);
};

struct SquadData {
  std::vector<Triplet> triplets;
  int skipped_empty_answers = 0;
};

/// Reads the nested article/paragraph/qa JSON layout. Structural problems
/// raise DataError with a path locator; QAs with an empty answers list are
/// skipped and counted.
SquadData parse_squad(const std::string& path);

/// Writes triplets back out in the same JSON layout, grouping consecutive
/// triplets that share a context into one paragraph.
void write_squad(const std::string& path, const std::vector<Triplet>& triplets);

struct DatasetStats {
  std::size_t triplets = 0;
  Scalar mean_context_tokens = 0.0;
  Scalar mean_question_tokens = 0.0;
  Scalar mean_answer_tokens = 0.0;
};

DatasetStats dataset_stats(const std::vector<Triplet>& triplets);

}  // namespace daanet
