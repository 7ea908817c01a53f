#include "daanet/synthetic.hpp"

#include <random>
#include <string>

namespace daanet {

namespace {

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (const std::string& p : parts) {
    if (!out.empty()) out += ' ';
    out += p;
  }
  return out;
}

}  // namespace

// Answers are multi-token context spans: the second attention fold mixes the
// answer encodings, so single-token answers would leave question generation
// with a constant fold output and nothing to condition each step on.
std::vector<Triplet> synthetic_qa_corpus() {
  const std::vector<std::string> persons = {"alice", "bob", "carol", "david", "erin"};
  const std::vector<std::string> places = {"paris", "tokyo", "cairo", "oslo", "lima"};
  const std::vector<std::string> items = {"lamp", "violin", "kettle", "atlas",
                                          "compass"};
  const std::vector<std::string> colors = {"red", "blue", "green", "white", "black"};
  const std::vector<std::string> pets = {"dog", "cat", "crow", "fox", "hen"};
  const std::vector<std::string> names = {"rex", "momo", "juno", "ziggy", "pip"};
  const std::vector<std::string> numbers = {"seven", "twelve", "forty", "ninety"};

  std::vector<Triplet> out;
  for (int i = 0; i < 20; ++i) {
    const std::string& person = persons[i % 5];
    const std::string& place = places[(i + 2) % 5];
    const std::string& color = colors[(i + 1) % 5];
    const std::string& item = items[(i + 4) % 5];
    const std::string& pet = pets[(i + 3) % 5];
    const std::string& name = names[(i + 1) % 5];
    const std::string& number = numbers[i % 4];
    std::string context = join({person, "lives", "in", place, ".", person, "keeps",
                                "a", color, item, ".", "the", item, "cost", number,
                                "coins", ".", person, "has", "a", pet, "named",
                                name, "."});
    std::string question, answer;
    switch (i % 4) {
      case 0:
        question = join({"where", "does", person, "live", "?"});
        answer = join({"in", place});
        break;
      case 1:
        question = join({"what", "does", person, "keep", "?"});
        answer = join({"a", color, item});
        break;
      case 2:
        question = join({"how", "many", "coins", "did", "the", item, "cost", "?"});
        answer = join({number, "coins"});
        break;
      default:
        question = join({"what", "pet", "does", person, "have", "?"});
        answer = join({"a", pet, "named", name});
        break;
    }
    out.push_back(Triplet::make("syn-" + std::to_string(i), question, context, answer));
  }
  return out;
}

std::vector<Triplet> synthetic_copy_corpus() {
  std::vector<Triplet> out;
  for (int i = 0; i < 12; ++i) {
    std::string code = "zq" + std::to_string(10 + i) + "x";
    std::string context = join({"the", "secret", "code", "is", code, ".", "keep",
                                "it", "safe", "and", "tell", "nobody", "."});
    std::string question = "what is the secret code ?";
    out.push_back(
        Triplet::make("copy-" + std::to_string(i), question, context, code));
  }
  return out;
}

std::vector<Triplet> random_token_triplets(int n, std::uint64_t seed, int context_len,
                                           int question_len, int answer_len) {
  const std::vector<std::string> alphabet = {"ash", "bell", "cove", "dune", "elm",
                                             "fern", "gale", "holt", "iris", "jade"};
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  auto sequence = [&](int len) {
    std::vector<std::string> toks;
    for (int i = 0; i < len; ++i) toks.push_back(alphabet[pick(rng)]);
    return join(toks);
  };
  std::vector<Triplet> out;
  for (int i = 0; i < n; ++i)
    out.push_back(Triplet::make("rand-" + std::to_string(i), sequence(question_len),
                                sequence(context_len), sequence(answer_len)));
  return out;
}

}  // namespace daanet
