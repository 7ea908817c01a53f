#pragma once

#include "daanet/types.hpp"

#include <array>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace daanet {

/// Token table with four reserved ids. Non-special tokens are admitted when
/// their corpus count reaches min_count, then ordered by descending count
/// with lexicographic tie-break.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kStart = 2;
  static constexpr int kEnd = 3;
  static constexpr int kSpecials = 4;

  static const std::string& pad_token();
  static const std::string& unk_token();
  static const std::string& start_token();
  static const std::string& end_token();

  Vocabulary();

  static Vocabulary build(const std::vector<std::vector<std::string>>& corpus,
                          int min_count);
  /// Rebuilds from the non-special tokens in id order (checkpoint load).
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);

  int id(std::string_view token) const;  // kUnk when absent
  bool contains(std::string_view token) const;
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(id_to_token_.size()); }
  /// Non-special tokens in id order.
  std::vector<std::string> tokens() const;

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
  void push(const std::string& tok);
};

/// Fixed character inventory: id 0 pads, id 1 covers everything outside
/// printable ASCII, ids 2..96 are the printable ASCII range.
struct CharTable {
  static constexpr int kPadChar = 0;
  static constexpr int kUnkChar = 1;

  static constexpr int size() { return 2 + (126 - 32 + 1); }

  static int char_id(unsigned char c) {
    if (c >= 32 && c <= 126) return 2 + (c - 32);
    return kUnkChar;
  }
};

inline constexpr int kMaxWordChars = 16;

/// Character ids of a token, truncated or padded to kMaxWordChars.
std::array<int, kMaxWordChars> word_char_ids(std::string_view token);

}  // namespace daanet
