#pragma once

#include "daanet/attention.hpp"
#include "daanet/embedding.hpp"
#include "daanet/encoder.hpp"
#include "daanet/generator.hpp"
#include "daanet/optim.hpp"
#include "daanet/registry.hpp"
#include "daanet/squad.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace daanet {

enum class Task { qa, qg };
enum class Mode { dual, qa_only, qg_only };

const char* task_name(Task t);
const char* mode_name(Mode m);
Mode parse_mode(const std::string& s);

struct ModelConfig {
  Index d_word = 256;
  Index d_char = 200;
  Index d_model = 300;
  Index d_attn = 0;   // 0 resolves to d_model
  Index d_prime = 0;  // 0 resolves to d_enc
  int heads = 4;
  int lstm_layers = 3;
  Scalar kappa = 1.0;
  Scalar clip = 5.0;
  Scalar lr_max = 1e-3;
  std::int64_t warmup_steps = 1000;
  int batch = 16;
  Scalar keep = 0.9;
  int decode_cap = 100;
  int min_count = 5;
  Mode mode = Mode::dual;
  bool no_copy = false;
  bool no_context_attention = false;
  bool encoder_no_lstm = false;
  bool encoder_no_selfattn = false;
  bool unshare_qa_encoders = false;
  bool unshare_context_encoder = false;
  bool unshare_output_projection = false;
  bool share_attention_uv = false;
  bool vector_bias = false;
  Scalar qa_loss_weight = 1.0;
  Scalar qg_loss_weight = 1.0;
  std::uint64_t seed = 0;

  Index attn_width() const { return d_attn > 0 ? d_attn : d_model; }
  Index d_enc() const {
    return d_model *
           (1 + (encoder_no_lstm ? 0 : 1) + (encoder_no_selfattn ? 0 : 1));
  }
  Index prime_width() const { return d_prime > 0 ? d_prime : d_enc(); }
  bool task_active(Task t) const {
    return mode == Mode::dual || (mode == Mode::qa_only) == (t == Task::qa);
  }

  void validate() const;
  /// Stable key order; every field appears.
  std::vector<std::pair<std::string, std::string>> to_kv() const;
  /// Unknown keys are errors; missing keys keep their defaults.
  static ModelConfig from_kv(const std::map<std::string, std::string>& kv);
};

/// key=value lines, # comments. Applied on top of the given base config.
ModelConfig load_config_file(const std::string& path, ModelConfig base = {});

struct DirectionInput {
  std::vector<std::string> context;
  std::vector<std::string> counterpart;
  std::vector<std::string> prefix;  // start token plus consumed output tokens
  std::vector<std::string> gold;    // empty: forward only, no loss
};

struct DirectionOutputs {
  ad::Var context_enc, counterpart_enc, prefix_enc, fused_context, d_rows;
  ad::Var scores1;  // invalid when context attention is off
  ad::Var scores2;
  ad::Var lambda;  // invalid when the copy path is off
  ad::Var p_vocab, p_context, p_final;
  ad::Var coverage;   // per-step column
  ad::Var nll, loss;  // valid when gold was supplied
  std::vector<int> targets;
  ExtendedSpace ext;
  int clamp_count = 0;
};

struct TripletOutputs {
  std::optional<DirectionOutputs> qg, qa;
  ad::Var loss;
};

struct TrainMetrics {
  std::int64_t step = 0;
  Scalar loss = 0.0;  // mean combined loss per triplet
  Scalar qa_nll = 0.0, qg_nll = 0.0;
  Scalar qa_coverage = 0.0, qg_coverage = 0.0;
  long qa_tokens = 0, qg_tokens = 0;
  Scalar grad_norm = 0.0;  // before clipping
  Scalar lr = 0.0;
  int clamped = 0;

  Scalar qa_token_nll() const { return qa_tokens ? qa_nll / static_cast<Scalar>(qa_tokens) : 0.0; }
  Scalar qg_token_nll() const { return qg_tokens ? qg_nll / static_cast<Scalar>(qg_tokens) : 0.0; }
};

struct DecodeTrace {
  std::vector<Matrix> step_rows;  // final distribution row per emitted step
  Matrix fold1_scores;            // empty when context attention is off
  Matrix fold2_scores;            // rows for every step of the finished prefix
};

/// Resolved parameter handles for one task direction.
struct TaskParams {
  EncoderParams context, counterpart, prefix;
  AttnSiteParams fold1;  // null parameters when context attention is off
  AttnSiteParams fold2;
  GeneratorParams gen;
  Scalar loss_weight = 1.0;
};

Index argmax_lowest(const Matrix& row);

class Model {
 public:
  Model(ModelConfig cfg, Vocabulary vocab);

  DirectionOutputs run_direction(ad::Tape& tape, Task task, const DirectionInput& in,
                                 bool training);
  TripletOutputs triplet_outputs(ad::Tape& tape, const Triplet& t, bool training);

  TrainMetrics train_step(const std::vector<Triplet>& batch, AdamState& state);

  /// Greedy decode against the triplet's context and observed counterpart;
  /// stops at the end token or after decode_cap emissions.
  std::vector<std::string> decode(Task task, const Triplet& t,
                                  DecodeTrace* trace = nullptr);

  DirectionInput make_training_input(Task task, const Triplet& t) const;

  const ModelConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }
  ParameterRegistry& registry() { return registry_; }
  const ParameterRegistry& registry() const { return registry_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  const TaskParams& task_params(Task t) const;
  const EmbeddingParams& embedding() const { return embedding_; }
  std::mt19937_64& dropout_rng() { return dropout_rng_; }

 private:
  ModelConfig cfg_;
  Vocabulary vocab_;
  ParameterRegistry registry_;
  EmbeddingParams embedding_;
  std::optional<TaskParams> qa_, qg_;
  std::vector<std::string> warnings_;
  std::mt19937_64 dropout_rng_;

  void assemble();
  ad::Var embed_tokens(ad::Tape& tape, const std::vector<std::string>& tokens);
};

}  // namespace daanet
