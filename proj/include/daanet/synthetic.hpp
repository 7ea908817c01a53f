#pragma once

#include "daanet/squad.hpp"

#include <cstdint>
#include <vector>

namespace daanet {

/// Small closed-world corpus: templated facts about people, places, objects,
/// and prices, with one question per triplet. Every answer word recurs often
/// enough to enter the vocabulary at min_count 1.
std::vector<Triplet> synthetic_qa_corpus();

/// Copy-pressure corpus: each answer is a nonce code that appears exactly
/// twice in the whole corpus, so it stays out of any vocabulary built with
/// min_count above 2 and can only be produced through the context.
std::vector<Triplet> synthetic_copy_corpus();

/// Random word-salad triplets over a tiny alphabet, for gradient checks.
std::vector<Triplet> random_token_triplets(int n, std::uint64_t seed,
                                           int context_len = 6,
                                           int question_len = 4,
                                           int answer_len = 3);

}  // namespace daanet
