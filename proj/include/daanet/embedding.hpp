#pragma once

#include "daanet/tape.hpp"
#include "daanet/vocab.hpp"

#include <array>
#include <string>
#include <vector>

namespace daanet {

struct EmbeddingConfig {
  Index d_word = 256;
  Index d_char = 200;
  Index d_model = 300;
  bool vector_bias = false;  // highway biases as 1 x d_model rows instead of scalars
};

/// word: |V| x d_word (non-special rows frozen), chars: char-table x d_char,
/// conv: width-3 kernel stacked (previous, center, next), then the highway
/// projection H1..H3 with biases v1..v3.
struct EmbeddingParams {
  EmbeddingConfig cfg;
  ParamPtr word, chars, conv;
  ParamPtr H1, H2, H3, v1, v2, v3;
};

/// word ids plus per-token character ids -> L x d_model rows.
ad::Var embed_sequence(ad::Tape& tape, const EmbeddingParams& params,
                       const std::vector<int>& word_ids,
                       const std::vector<std::array<int, kMaxWordChars>>& char_ids);

std::vector<int> word_ids_of(const Vocabulary& vocab,
                             const std::vector<std::string>& tokens);
std::vector<std::array<int, kMaxWordChars>> char_ids_of(
    const std::vector<std::string>& tokens);

/// Text format: one entry per line, token then d_word floats, space-separated.
/// Fills matching non-special vocabulary rows and returns how many were found;
/// other file entries are ignored. Malformed lines raise DataError naming the
/// line number.
int load_word_embeddings(const std::string& path, const Vocabulary& vocab,
                         Parameter& word);

}  // namespace daanet
