#include "daanet/registry.hpp"

namespace daanet {

ParamPtr ParameterRegistry::create(const std::string& name, Index rows, Index cols) {
  if (params_.count(name) || aliases_.count(name))
    throw DataError("registry: duplicate parameter name: " + name);
  if (rows <= 0 || cols <= 0)
    throw DataError("registry: non-positive extent for " + name);
  auto p = std::make_shared<Parameter>();
  p->value = Matrix::Zero(rows, cols);
  params_.emplace(name, p);
  return p;
}

void ParameterRegistry::add_alias(const std::string& alias, const std::string& target) {
  if (params_.count(alias) || aliases_.count(alias))
    throw DataError("registry: duplicate parameter name: " + alias);
  auto it = params_.find(target);
  if (it == params_.end()) {
    auto a = aliases_.find(target);
    if (a == aliases_.end())
      throw DataError("registry: alias target missing: " + target);
    aliases_.emplace(alias, a->second);  // collapse alias chains
    return;
  }
  aliases_.emplace(alias, target);
}

bool ParameterRegistry::has(const std::string& name) const {
  return params_.count(name) != 0 || aliases_.count(name) != 0;
}

const std::string& ParameterRegistry::canonical(const std::string& name) const {
  auto a = aliases_.find(name);
  if (a != aliases_.end()) return a->second;
  if (params_.count(name)) return params_.find(name)->first;
  throw DataError("registry: unknown parameter: " + name);
}

ParamPtr ParameterRegistry::at(const std::string& name) const {
  return params_.find(canonical(name))->second;
}

Index ParameterRegistry::parameter_count() const {
  Index n = 0;
  for (const auto& [name, p] : params_) n += p->size();
  return n;
}

Index ParameterRegistry::trainable_count() const {
  Index n = 0;
  for (const auto& [name, p] : params_) n += p->trainable_size();
  return n;
}

Index ParameterRegistry::parameter_count_prefix(const std::string& prefix) const {
  Index n = 0;
  for (const auto& [name, p] : params_)
    if (name.rfind(prefix, 0) == 0) n += p->size();
  return n;
}

}  // namespace daanet
