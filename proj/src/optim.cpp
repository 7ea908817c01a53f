#include "daanet/optim.hpp"

#include <cmath>

namespace daanet {

GradMap collect_gradients(const ad::Tape& tape, const ParameterRegistry& registry,
                          bool apply_freeze) {
  GradMap out;
  for (const auto& [name, p] : registry.physical()) {
    Matrix g = tape.grad_of(p);
    if (apply_freeze && p->trainable && !p->frozen_rows.empty()) {
      for (Index r = 0; r < g.rows(); ++r)
        if (p->row_frozen(r)) g.row(r).setZero();
    }
    out.emplace(name, std::move(g));
  }
  return out;
}

Scalar clip_global_norm(GradMap& grads, Scalar max_norm) {
  Scalar sq = 0.0;
  for (const auto& [name, g] : grads) sq += g.squaredNorm();
  Scalar norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    Scalar s = max_norm / norm;
    for (auto& [name, g] : grads) g *= s;
  }
  return norm;
}

void adam_step(ParameterRegistry& registry, const GradMap& grads, AdamState& state,
               Scalar lr, Scalar beta1, Scalar beta2, Scalar eps) {
  state.step += 1;
  Scalar c1 = 1.0 - std::pow(beta1, static_cast<Scalar>(state.step));
  Scalar c2 = 1.0 - std::pow(beta2, static_cast<Scalar>(state.step));
  for (const auto& [name, p] : registry.physical()) {
    if (!p->trainable) continue;
    auto git = grads.find(name);
    if (git == grads.end()) throw NumericError("adam_step: missing gradient for " + name);
    const Matrix& g = git->second;
    if (g.rows() != p->value.rows() || g.cols() != p->value.cols())
      throw NumericError("adam_step: gradient shape mismatch for " + name);
    auto& [m, v] = state.moments[name];
    if (m.size() == 0) {
      m = Matrix::Zero(g.rows(), g.cols());
      v = Matrix::Zero(g.rows(), g.cols());
    }
    m = beta1 * m + (1.0 - beta1) * g;
    v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
    Matrix update =
        (lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps)).matrix();
    if (!p->frozen_rows.empty()) {
      for (Index r = 0; r < update.rows(); ++r)
        if (p->row_frozen(r)) update.row(r).setZero();
    }
    p->value -= update;
  }
}

Scalar learning_rate(std::int64_t step, std::int64_t warmup_steps, Scalar lr_max) {
  if (step < 0) throw NumericError("learning_rate: negative step");
  if (warmup_steps <= 0) throw NumericError("learning_rate: warmup_steps must be positive");
  return lr_max * (1.0 - std::exp(-static_cast<Scalar>(step) /
                                  static_cast<Scalar>(warmup_steps)));
}

}  // namespace daanet
