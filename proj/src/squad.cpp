#include "daanet/squad.hpp"

#include <nlohmann/json.hpp>

#include <cctype>
#include <fstream>

namespace daanet {

using nlohmann::json;

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  };
  for (char ch : text) {
    unsigned char c = static_cast<unsigned char>(ch);
    if (c < 0x80 && std::isspace(c)) {
      flush();
      continue;
    }
    if (c < 0x80 && std::ispunct(c)) {
      flush();
      out.emplace_back(1, static_cast<char>(c));
      continue;
    }
    cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
  }
  flush();
  return out;
}

Triplet Triplet::make(std::string id, std::string question, std::string context,
                      std::string answer) {
  Triplet t;
  t.id = std::move(id);
  t.question = std::move(question);
  t.context = std::move(context);
  t.answer = std::move(answer);
  t.question_tokens = tokenize(t.question);
  t.context_tokens = tokenize(t.context);
  t.answer_tokens = tokenize(t.answer);
  return t;
}

namespace {

const json& need(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end())
    throw DataError("squad: missing \"" + std::string(key) + "\" at " + where);
  return *it;
}

std::string need_string(const json& obj, const char* key, const std::string& where) {
  const json& v = need(obj, key, where);
  if (!v.is_string())
    throw DataError("squad: \"" + std::string(key) + "\" is not a string at " + where);
  return v.get<std::string>();
}

}  // namespace

SquadData parse_squad(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("squad: cannot open " + path);
  json root;
  try {
    in >> root;
  } catch (const json::parse_error& e) {
    throw DataError("squad: malformed JSON in " + path + ": " + e.what());
  }
  if (!root.is_object()) throw DataError("squad: top level is not an object");
  const json& data = need(root, "data", "$");
  if (!data.is_array()) throw DataError("squad: \"data\" is not an array");

  SquadData out;
  for (std::size_t a = 0; a < data.size(); ++a) {
    std::string a_where = "data[" + std::to_string(a) + "]";
    const json& article = data[a];
    if (!article.is_object()) throw DataError("squad: " + a_where + " is not an object");
    const json& paragraphs = need(article, "paragraphs", a_where);
    if (!paragraphs.is_array())
      throw DataError("squad: \"paragraphs\" is not an array at " + a_where);
    for (std::size_t p = 0; p < paragraphs.size(); ++p) {
      std::string p_where = a_where + ".paragraphs[" + std::to_string(p) + "]";
      const json& para = paragraphs[p];
      if (!para.is_object()) throw DataError("squad: " + p_where + " is not an object");
      std::string context = need_string(para, "context", p_where);
      const json& qas = need(para, "qas", p_where);
      if (!qas.is_array()) throw DataError("squad: \"qas\" is not an array at " + p_where);
      for (std::size_t q = 0; q < qas.size(); ++q) {
        std::string q_where = p_where + ".qas[" + std::to_string(q) + "]";
        const json& qa = qas[q];
        if (!qa.is_object()) throw DataError("squad: " + q_where + " is not an object");
        std::string question = need_string(qa, "question", q_where);
        std::string qid =
            qa.contains("id") && qa["id"].is_string() ? qa["id"].get<std::string>() : q_where;
        const json& answers = need(qa, "answers", q_where);
        if (!answers.is_array())
          throw DataError("squad: \"answers\" is not an array at " + q_where);
        if (answers.empty()) {
          ++out.skipped_empty_answers;
          continue;
        }
        const json& first = answers[0];
        if (!first.is_object())
          throw DataError("squad: answers[0] is not an object at " + q_where);
        std::string answer = need_string(first, "text", q_where + ".answers[0]");
        out.triplets.push_back(
            Triplet::make(std::move(qid), std::move(question), context, std::move(answer)));
      }
    }
  }
  return out;
}

void write_squad(const std::string& path, const std::vector<Triplet>& triplets) {
  json paragraphs = json::array();
  json* para = nullptr;
  std::string last_context;
  for (const Triplet& t : triplets) {
    if (!para || t.context != last_context) {
      paragraphs.push_back({{"context", t.context}, {"qas", json::array()}});
      para = &paragraphs.back();
      last_context = t.context;
    }
    (*para)["qas"].push_back({{"id", t.id},
                              {"question", t.question},
                              {"answers", json::array({{{"text", t.answer}}})}});
  }
  json root = {{"version", "1.1"},
               {"data", json::array({{{"title", "synthetic"},
                                      {"paragraphs", paragraphs}}})}};
  std::ofstream out(path);
  if (!out) throw DataError("squad: cannot write " + path);
  out << root.dump(1) << "\n";
}

DatasetStats dataset_stats(const std::vector<Triplet>& triplets) {
  DatasetStats s;
  s.triplets = triplets.size();
  if (triplets.empty()) return s;
  Scalar n = 0, m = 0, k = 0;
  for (const Triplet& t : triplets) {
    n += static_cast<Scalar>(t.context_tokens.size());
    m += static_cast<Scalar>(t.question_tokens.size());
    k += static_cast<Scalar>(t.answer_tokens.size());
  }
  Scalar count = static_cast<Scalar>(triplets.size());
  s.mean_context_tokens = n / count;
  s.mean_question_tokens = m / count;
  s.mean_answer_tokens = k / count;
  return s;
}

}  // namespace daanet
