#include "daanet/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <thread>

namespace daanet {

std::vector<std::vector<std::string>> decode_all(Model& model, Task task,
                                                 const std::vector<Triplet>& data,
                                                 int threads) {
  std::vector<std::vector<std::string>> out(data.size());
  if (threads <= 1 || data.size() <= 1) {
    for (std::size_t i = 0; i < data.size(); ++i) out[i] = model.decode(task, data[i]);
    return out;
  }
  std::size_t n_threads = std::min<std::size_t>(threads, data.size());
  std::vector<std::thread> pool;
  std::atomic<std::size_t> cursor{0};
  for (std::size_t w = 0; w < n_threads; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = cursor.fetch_add(1); i < data.size();
           i = cursor.fetch_add(1))
        out[i] = model.decode(task, data[i]);
    });
  }
  for (std::thread& t : pool) t.join();
  return out;
}

Scalar mean_token_nll(Model& model, Task task, const std::vector<Triplet>& data) {
  Scalar total = 0.0;
  long tokens = 0;
  for (const Triplet& t : data) {
    ad::Tape tape(false);
    DirectionOutputs out =
        model.run_direction(tape, task, model.make_training_input(task, t), false);
    total += tape.value(out.nll)(0, 0);
    tokens += static_cast<long>(out.targets.size());
  }
  return tokens ? total / static_cast<Scalar>(tokens) : 0.0;
}

Scalar exact_match_rate(const std::vector<std::vector<std::string>>& decoded,
                        const std::vector<std::vector<std::string>>& gold) {
  if (decoded.size() != gold.size())
    throw DataError("exact_match_rate: length mismatch");
  if (decoded.empty()) return 0.0;
  long hits = 0;
  for (std::size_t i = 0; i < decoded.size(); ++i)
    if (decoded[i] == gold[i]) ++hits;
  return static_cast<Scalar>(hits) / static_cast<Scalar>(decoded.size());
}

namespace {

TaskReport score_task(Model& model, Task task, const std::vector<Triplet>& data,
                      const EvalOptions& opts) {
  TaskReport rep;
  rep.active = true;
  rep.count = static_cast<long>(data.size());

  std::vector<std::vector<std::string>> decoded =
      decode_all(model, task, data, opts.threads);
  std::vector<std::vector<std::string>> gold;
  gold.reserve(data.size());
  for (const Triplet& t : data)
    gold.push_back(task == Task::qa ? t.answer_tokens : t.question_tokens);

  Scalar n = static_cast<Scalar>(data.size());
  auto bleu_n = [&](int max_n) {
    if (opts.corpus_bleu) {
      std::vector<std::pair<TokenSeq, TokenSeq>> pairs;
      pairs.reserve(data.size());
      for (std::size_t i = 0; i < data.size(); ++i)
        pairs.emplace_back(decoded[i], gold[i]);
      return corpus_bleu(pairs, max_n);
    }
    Scalar sum = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) sum += bleu(decoded[i], gold[i], max_n);
    return sum / n;
  };
  rep.bleu1 = bleu_n(1);
  rep.bleu2 = bleu_n(2);
  rep.bleu3 = bleu_n(3);
  rep.bleu4 = bleu_n(4);
  Scalar rouge_sum = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i)
    rouge_sum += rouge_l(decoded[i], gold[i], opts.rouge_beta);
  rep.rouge = rouge_sum / n;
  rep.exact_match = exact_match_rate(decoded, gold);
  rep.token_nll = mean_token_nll(model, task, data);
  return rep;
}

}  // namespace

EvalReport evaluate(Model& model, const std::vector<Triplet>& data,
                    const EvalOptions& opts) {
  if (data.empty()) throw DataError("evaluate: no examples");
  EvalReport rep;
  if (model.config().task_active(Task::qa))
    rep.qa = score_task(model, Task::qa, data, opts);
  if (model.config().task_active(Task::qg))
    rep.qg = score_task(model, Task::qg, data, opts);
  return rep;
}

std::string format_report(const EvalReport& report) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-5s %8s %8s %8s %8s %8s %8s %10s %6s\n",
                "task", "B1", "B2", "B3", "B4", "RL", "EM", "nll/tok", "n");
  out += line;
  auto row = [&](const char* name, const TaskReport& r) {
    if (!r.active) return;
    std::snprintf(line, sizeof(line),
                  "%-5s %8.2f %8.2f %8.2f %8.2f %8.2f %8.2f %10.4f %6ld\n", name,
                  100.0 * r.bleu1, 100.0 * r.bleu2, 100.0 * r.bleu3, 100.0 * r.bleu4,
                  100.0 * r.rouge, 100.0 * r.exact_match, r.token_nll, r.count);
    out += line;
  };
  row("qa", report.qa);
  row("qg", report.qg);
  return out;
}

}  // namespace daanet
