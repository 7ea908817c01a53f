#include "daanet/vocab.hpp"

#include <algorithm>
#include <map>

namespace daanet {

const std::string& Vocabulary::pad_token() {
  static const std::string s = "<pad>";
  return s;
}
const std::string& Vocabulary::unk_token() {
  static const std::string s = "<unk>";
  return s;
}
const std::string& Vocabulary::start_token() {
  static const std::string s = "<start>";
  return s;
}
const std::string& Vocabulary::end_token() {
  static const std::string s = "<end>";
  return s;
}

Vocabulary::Vocabulary() {
  push(pad_token());
  push(unk_token());
  push(start_token());
  push(end_token());
}

void Vocabulary::push(const std::string& tok) {
  token_to_id_.emplace(tok, static_cast<int>(id_to_token_.size()));
  id_to_token_.push_back(tok);
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& corpus,
                             int min_count) {
  std::map<std::string, long> counts;
  for (const auto& seq : corpus)
    for (const auto& tok : seq) ++counts[tok];

  std::vector<std::pair<std::string, long>> kept;
  for (const auto& [tok, n] : counts)
    if (n >= min_count) kept.emplace_back(tok, n);
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocabulary v;
  for (const auto& [tok, n] : kept) v.push(tok);
  return v;
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  Vocabulary v;
  for (const auto& tok : tokens) {
    if (v.contains(tok)) throw DataError("vocabulary: duplicate token: " + tok);
    v.push(tok);
  }
  return v;
}

int Vocabulary::id(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  return it == token_to_id_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return token_to_id_.count(std::string(token)) != 0;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw DataError("vocabulary: id out of range");
  return id_to_token_[static_cast<std::size_t>(id)];
}

std::vector<std::string> Vocabulary::tokens() const {
  return {id_to_token_.begin() + kSpecials, id_to_token_.end()};
}

std::array<int, kMaxWordChars> word_char_ids(std::string_view token) {
  std::array<int, kMaxWordChars> out;
  out.fill(CharTable::kPadChar);
  std::size_t n = std::min<std::size_t>(token.size(), kMaxWordChars);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = CharTable::char_id(static_cast<unsigned char>(token[i]));
  return out;
}

}  // namespace daanet
