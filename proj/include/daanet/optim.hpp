#pragma once

#include "daanet/registry.hpp"
#include "daanet/tape.hpp"

#include <cstdint>
#include <map>
#include <string>

namespace daanet {

/// Gradients keyed by canonical parameter name.
using GradMap = std::map<std::string, Matrix>;

struct AdamState {
  std::int64_t step = 0;
  // first/second moments per canonical parameter name
  std::map<std::string, std::pair<Matrix, Matrix>> moments;
};

/// Pulls gradients off a finished tape for every physical parameter.
/// Unreached parameters get zeros. With apply_freeze, frozen rows are zeroed
/// so neither moments nor updates ever touch them.
GradMap collect_gradients(const ad::Tape& tape, const ParameterRegistry& registry,
                          bool apply_freeze = true);

/// Global l2 clip: if the joint norm exceeds max_norm, every gradient is
/// scaled by max_norm / norm. Returns the pre-clip norm.
Scalar clip_global_norm(GradMap& grads, Scalar max_norm);

/// One Adam update with bias correction over every trainable parameter.
/// state.step is incremented once per call.
void adam_step(ParameterRegistry& registry, const GradMap& grads, AdamState& state,
               Scalar lr, Scalar beta1 = 0.9, Scalar beta2 = 0.999,
               Scalar eps = 1e-8);

/// Warmup schedule: lr_max * (1 - exp(-step / warmup_steps)).
Scalar learning_rate(std::int64_t step, std::int64_t warmup_steps, Scalar lr_max);

}  // namespace daanet
