#include "daanet/fdcheck.hpp"

#include <algorithm>
#include <numeric>

namespace daanet {

namespace {

Scalar central_diff(const LossFn& loss, Parameter& p, Index r, Index c, Scalar eps) {
  Scalar saved = p.value(r, c);
  p.value(r, c) = saved + eps;
  Scalar up = loss();
  p.value(r, c) = saved - eps;
  Scalar down = loss();
  p.value(r, c) = saved;
  return (up - down) / (2.0 * eps);
}

}  // namespace

GradMap finite_difference_gradient(
    const LossFn& loss, const std::vector<std::pair<std::string, ParamPtr>>& params,
    Scalar eps) {
  GradMap out;
  for (const auto& [name, p] : params) {
    Matrix g(p->value.rows(), p->value.cols());
    for (Index r = 0; r < g.rows(); ++r)
      for (Index c = 0; c < g.cols(); ++c)
        g(r, c) = central_diff(loss, *p, r, c, eps);
    out.emplace(name, std::move(g));
  }
  return out;
}

std::vector<FdSample> finite_difference_sampled(
    const LossFn& loss, const std::vector<std::pair<std::string, ParamPtr>>& params,
    Scalar eps, int max_per_param, std::mt19937_64& rng) {
  std::vector<FdSample> out;
  for (const auto& [name, p] : params) {
    Index total = p->value.size();
    std::vector<Index> coords(static_cast<std::size_t>(total));
    std::iota(coords.begin(), coords.end(), Index{0});
    std::shuffle(coords.begin(), coords.end(), rng);
    Index take = std::min<Index>(total, max_per_param);
    for (Index k = 0; k < take; ++k) {
      Index flat = coords[static_cast<std::size_t>(k)];
      Index r = flat / p->value.cols();
      Index c = flat % p->value.cols();
      out.push_back({name, r, c, central_diff(loss, *p, r, c, eps)});
    }
  }
  return out;
}

}  // namespace daanet
