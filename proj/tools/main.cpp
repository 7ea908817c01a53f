#include "daanet/checkpoint.hpp"
#include "daanet/eval.hpp"
#include "daanet/fdcheck.hpp"
#include "daanet/synthetic.hpp"
#include "daanet/train.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

namespace {

using namespace daanet;

std::string join(const std::vector<std::string>& toks) {
  std::string out;
  for (const std::string& t : toks) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

std::vector<Triplet> load_examples(const std::string& data_path,
                                   const std::string& synthetic) {
  if (!data_path.empty() && !synthetic.empty())
    throw UsageError("pass --data or --synthetic, not both");
  if (!data_path.empty()) {
    SquadData d = parse_squad(data_path);
    if (d.skipped_empty_answers)
      std::cerr << "note: skipped " << d.skipped_empty_answers
                << " questions without answers\n";
    if (d.triplets.empty()) throw DataError("no usable examples in " + data_path);
    return d.triplets;
  }
  if (synthetic == "qa") return synthetic_qa_corpus();
  if (synthetic == "copy") return synthetic_copy_corpus();
  if (!synthetic.empty())
    throw UsageError("unknown synthetic corpus: " + synthetic);
  throw UsageError("no input: pass --data FILE or --synthetic NAME");
}

struct TrainArgs {
  std::string data, synthetic, config, embeddings, out, resume;
  std::string mode;
  long steps = 200;
  long log_every = 10;
  ModelConfig overrides;
};

int run_train(CLI::App& cmd, TrainArgs& a) {
  std::vector<Triplet> examples = load_examples(a.data, a.synthetic);

  std::unique_ptr<Model> model;
  AdamState state;
  if (!a.resume.empty()) {
    LoadedCheckpoint ck = load_checkpoint(a.resume);
    model = std::move(ck.model);
    state = std::move(ck.state);
    if (!a.config.empty() || cmd.count("--mode") || cmd.count("--d-model"))
      std::cerr << "note: --resume keeps the checkpoint configuration\n";
  } else {
    ModelConfig cfg;
    if (!a.config.empty()) cfg = load_config_file(a.config, cfg);
    auto touch = [&](const char* flag) { return cmd.count(flag) > 0; };
    if (touch("--mode")) cfg.mode = parse_mode(a.mode);
    if (touch("--d-word")) cfg.d_word = a.overrides.d_word;
    if (touch("--d-char")) cfg.d_char = a.overrides.d_char;
    if (touch("--d-model")) cfg.d_model = a.overrides.d_model;
    if (touch("--heads")) cfg.heads = a.overrides.heads;
    if (touch("--lstm-layers")) cfg.lstm_layers = a.overrides.lstm_layers;
    if (touch("--batch")) cfg.batch = a.overrides.batch;
    if (touch("--lr-max")) cfg.lr_max = a.overrides.lr_max;
    if (touch("--warmup")) cfg.warmup_steps = a.overrides.warmup_steps;
    if (touch("--kappa")) cfg.kappa = a.overrides.kappa;
    if (touch("--clip")) cfg.clip = a.overrides.clip;
    if (touch("--keep")) cfg.keep = a.overrides.keep;
    if (touch("--min-count")) cfg.min_count = a.overrides.min_count;
    if (touch("--decode-cap")) cfg.decode_cap = a.overrides.decode_cap;
    if (touch("--seed")) cfg.seed = a.overrides.seed;
    if (touch("--no-copy")) cfg.no_copy = true;
    if (touch("--no-context-attention")) cfg.no_context_attention = true;
    if (touch("--encoder-no-lstm")) cfg.encoder_no_lstm = true;
    if (touch("--encoder-no-selfattn")) cfg.encoder_no_selfattn = true;
    if (touch("--unshare-qa-encoders")) cfg.unshare_qa_encoders = true;
    if (touch("--unshare-context-encoder")) cfg.unshare_context_encoder = true;
    if (touch("--unshare-output-projection")) cfg.unshare_output_projection = true;
    if (touch("--share-attention-uv")) cfg.share_attention_uv = true;
    if (touch("--vector-bias")) cfg.vector_bias = true;

    Vocabulary vocab = Vocabulary::build(vocabulary_corpus(examples), cfg.min_count);
    model = std::make_unique<Model>(cfg, std::move(vocab));
    for (const std::string& w : model->warnings()) std::cerr << "note: " << w << "\n";
    if (!a.embeddings.empty()) {
      int found = load_word_embeddings(a.embeddings, model->vocab(),
                                       *model->registry().at("embedding.word"));
      std::cerr << "loaded " << found << " of "
                << model->vocab().size() - Vocabulary::kSpecials
                << " word vectors\n";
    }
  }

  BatchStream stream(examples, model->config().batch, model->config().seed + 1);
  for (long i = 0; i < a.steps; ++i) {
    TrainMetrics m = model->train_step(stream.next(), state);
    if (a.log_every > 0 && (m.step % a.log_every == 0 || i + 1 == a.steps)) {
      std::printf("step %lld loss %.4f", static_cast<long long>(m.step), m.loss);
      if (m.qa_tokens) std::printf(" qa/tok %.4f", m.qa_token_nll());
      if (m.qg_tokens) std::printf(" qg/tok %.4f", m.qg_token_nll());
      std::printf(" gnorm %.3f lr %.6f\n", m.grad_norm, m.lr);
      std::fflush(stdout);
    }
  }
  if (!a.out.empty()) {
    save_checkpoint(a.out, *model, state);
    std::cout << "saved " << a.out << "\n";
  }
  return 0;
}

struct GenArgs {
  std::string checkpoint, data, synthetic, task = "qg", dump_dir, out;
  long limit = 0;
};

void dump_matrix(std::ofstream& out, const char* label, const Matrix& m) {
  out << label << " " << m.rows() << " " << m.cols() << "\n";
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) out << ' ';
      out << m(i, j);
    }
    out << '\n';
  }
}

int run_generate(GenArgs& a) {
  LoadedCheckpoint ck = load_checkpoint(a.checkpoint);
  Task task = a.task == "qa" ? Task::qa : Task::qg;
  if (a.task != "qa" && a.task != "qg")
    throw UsageError("unknown task: " + a.task);
  if (!ck.model->config().task_active(task))
    throw UsageError("checkpoint was not trained for task " + a.task);
  std::vector<Triplet> examples = load_examples(a.data, a.synthetic);
  if (a.limit > 0 && static_cast<std::size_t>(a.limit) < examples.size())
    examples.resize(static_cast<std::size_t>(a.limit));
  if (!a.dump_dir.empty()) std::filesystem::create_directories(a.dump_dir);
  std::ofstream out_file;
  if (!a.out.empty()) {
    out_file.open(a.out, std::ios::trunc);
    if (!out_file) throw DataError("cannot open " + a.out + " for writing");
  }
  for (const Triplet& t : examples) {
    DecodeTrace trace;
    std::vector<std::string> toks =
        ck.model->decode(task, t, a.dump_dir.empty() ? nullptr : &trace);
    if (out_file.is_open())
      out_file << join(toks) << "\n";
    else
      std::cout << t.id << "\t" << join(toks) << "\n";
    if (!a.dump_dir.empty()) {
      std::ofstream dump(a.dump_dir + "/" + t.id + "." + a.task + ".txt");
      if (!dump) throw DataError("cannot write attention dump for " + t.id);
      if (trace.fold1_scores.size()) dump_matrix(dump, "fold1", trace.fold1_scores);
      dump_matrix(dump, "fold2", trace.fold2_scores);
    }
  }
  return 0;
}

struct EvalArgs {
  std::string checkpoint, data, synthetic;
  EvalOptions opts;
};

int run_eval(EvalArgs& a) {
  LoadedCheckpoint ck = load_checkpoint(a.checkpoint);
  std::vector<Triplet> examples = load_examples(a.data, a.synthetic);
  EvalReport rep = evaluate(*ck.model, examples, a.opts);
  std::cout << format_report(rep);
  return 0;
}

int run_stats(const std::string& data_path) {
  SquadData d = parse_squad(data_path);
  DatasetStats s = dataset_stats(d.triplets);
  std::printf("triplets %zu\n", s.triplets);
  std::printf("skipped (no answer) %d\n", d.skipped_empty_answers);
  std::printf("mean context tokens %.2f\n", s.mean_context_tokens);
  std::printf("mean question tokens %.2f\n", s.mean_question_tokens);
  std::printf("mean answer tokens %.2f\n", s.mean_answer_tokens);
  return 0;
}

int run_gradcheck(std::uint64_t seed, int samples) {
  ModelConfig cfg;
  cfg.d_word = 10;
  cfg.d_char = 6;
  cfg.d_model = 8;
  cfg.heads = 2;
  cfg.lstm_layers = 1;
  cfg.keep = 1.0;
  cfg.min_count = 1;
  cfg.seed = seed;
  std::vector<Triplet> data = random_token_triplets(3, seed);
  Vocabulary vocab = Vocabulary::build(vocabulary_corpus(data), 1);
  Model model(cfg, std::move(vocab));

  ad::Tape tape;
  TripletOutputs outs = model.triplet_outputs(tape, data[0], false);
  tape.backward(outs.loss);
  GradMap analytic = collect_gradients(tape, model.registry(), false);

  std::vector<std::pair<std::string, ParamPtr>> params;
  for (const auto& [name, p] : model.registry().physical())
    params.emplace_back(name, p);
  LossFn loss = [&]() {
    ad::Tape t2;
    return t2.value(model.triplet_outputs(t2, data[0], false).loss)(0, 0);
  };
  std::mt19937_64 rng(seed + 17);
  std::vector<FdSample> fd = finite_difference_sampled(loss, params, 1e-5, samples, rng);

  Scalar worst = 0.0;
  std::string worst_name;
  for (const FdSample& s : fd) {
    Scalar an = analytic.at(s.name)(s.row, s.col);
    Scalar err = relative_error(an, s.fd);
    if (err > worst) {
      worst = err;
      worst_name = s.name + "[" + std::to_string(s.row) + "," +
                   std::to_string(s.col) + "]";
    }
  }
  std::printf("checked %zu coordinates, max relative error %.3e at %s\n", fd.size(),
              worst, worst_name.c_str());
  if (worst > 1e-4) throw NumericError("gradient check failed");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dual question answering / question generation toolkit"};
  app.require_subcommand(1);

  TrainArgs ta;
  CLI::App* train = app.add_subcommand("train", "train a model");
  train->add_option("--data", ta.data, "SQuAD-layout JSON file");
  train->add_option("--synthetic", ta.synthetic, "built-in corpus: qa or copy");
  train->add_option("--config", ta.config, "key=value config file");
  train->add_option("--embeddings", ta.embeddings, "pretrained word vectors");
  train->add_option("--out", ta.out, "checkpoint to write");
  train->add_option("--resume", ta.resume, "checkpoint to continue from");
  train->add_option("--steps", ta.steps, "optimizer steps");
  train->add_option("--log-every", ta.log_every, "log interval, 0 silences");
  train->add_option("--mode", ta.mode, "dual, qa-only, or qg-only");
  train->add_option("--d-word", ta.overrides.d_word);
  train->add_option("--d-char", ta.overrides.d_char);
  train->add_option("--d-model", ta.overrides.d_model);
  train->add_option("--heads", ta.overrides.heads);
  train->add_option("--lstm-layers", ta.overrides.lstm_layers);
  train->add_option("--batch", ta.overrides.batch);
  train->add_option("--lr-max", ta.overrides.lr_max);
  train->add_option("--warmup", ta.overrides.warmup_steps);
  train->add_option("--kappa", ta.overrides.kappa);
  train->add_option("--clip", ta.overrides.clip);
  train->add_option("--keep", ta.overrides.keep);
  train->add_option("--min-count", ta.overrides.min_count);
  train->add_option("--decode-cap", ta.overrides.decode_cap);
  train->add_option("--seed", ta.overrides.seed);
  train->add_flag("--no-copy");
  train->add_flag("--no-context-attention");
  train->add_flag("--encoder-no-lstm");
  train->add_flag("--encoder-no-selfattn");
  train->add_flag("--unshare-qa-encoders");
  train->add_flag("--unshare-context-encoder");
  train->add_flag("--unshare-output-projection");
  train->add_flag("--share-attention-uv");
  train->add_flag("--vector-bias");

  GenArgs ga;
  CLI::App* gen = app.add_subcommand("generate", "decode with a trained model");
  gen->add_option("--ckpt,--checkpoint", ga.checkpoint)->required();
  gen->add_option("--data", ga.data, "SQuAD-layout JSON file");
  gen->add_option("--synthetic", ga.synthetic, "built-in corpus: qa or copy");
  gen->add_option("--task", ga.task, "qa or qg");
  gen->add_option("--out", ga.out, "write one generation per line instead of stdout");
  gen->add_option("--limit", ga.limit, "decode at most this many examples");
  gen->add_option("--dump-attention", ga.dump_dir,
                  "write per-example attention matrices into this directory");

  EvalArgs ea;
  CLI::App* ev = app.add_subcommand("eval", "score a trained model");
  ev->add_option("--ckpt,--checkpoint", ea.checkpoint)->required();
  ev->add_option("--data", ea.data, "SQuAD-layout JSON file");
  ev->add_option("--synthetic", ea.synthetic, "built-in corpus: qa or copy");
  ev->add_option("--threads", ea.opts.threads, "decode threads");
  ev->add_flag("--corpus-bleu", ea.opts.corpus_bleu,
               "pool n-gram counts over the corpus instead of macro-averaging");
  ev->add_option("--rouge-beta", ea.opts.rouge_beta,
                 "recall weight for the LCS F-score");

  std::string stats_data;
  CLI::App* st = app.add_subcommand("stats", "describe a dataset");
  st->add_option("--data", stats_data)->required();

  std::uint64_t gc_seed = 7;
  int gc_samples = 4;
  CLI::App* gc = app.add_subcommand("gradcheck",
                                    "compare backprop against finite differences");
  gc->add_option("--seed", gc_seed);
  gc->add_option("--samples", gc_samples, "coordinates per tensor");

  try {
    app.parse(argc, argv);
    if (train->parsed()) return run_train(*train, ta);
    if (gen->parsed()) return run_generate(ga);
    if (ev->parsed()) return run_eval(ea);
    if (st->parsed()) return run_stats(stats_data);
    if (gc->parsed()) return run_gradcheck(gc_seed, gc_samples);
    return 1;
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  }
}
