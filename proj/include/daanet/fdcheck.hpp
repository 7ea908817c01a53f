#pragma once

#include "daanet/optim.hpp"
#include "daanet/tape.hpp"

#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace daanet {

/// Re-evaluates the loss at the current parameter values.
using LossFn = std::function<Scalar()>;

/// Central differences over every coordinate of the given parameters.
GradMap finite_difference_gradient(
    const LossFn& loss, const std::vector<std::pair<std::string, ParamPtr>>& params,
    Scalar eps = 1e-5);

struct FdSample {
  std::string name;
  Index row = 0, col = 0;
  Scalar fd = 0.0;
};

/// Central differences over at most max_per_param coordinates of each
/// parameter, chosen without replacement by rng. Every parameter is covered.
std::vector<FdSample> finite_difference_sampled(
    const LossFn& loss, const std::vector<std::pair<std::string, ParamPtr>>& params,
    Scalar eps, int max_per_param, std::mt19937_64& rng);

/// |a - b| / max(|a|, |b|, guard); the guard keeps near-zero coordinates from
/// amplifying finite-difference noise.
inline Scalar relative_error(Scalar a, Scalar b, Scalar guard = 1e-6) {
  Scalar denom = std::max({std::abs(a), std::abs(b), guard});
  return std::abs(a - b) / denom;
}

}  // namespace daanet
