#pragma once

#include "daanet/tape.hpp"

#include <map>
#include <string>
#include <vector>

namespace daanet {

/// Owns every model parameter under a canonical name and records which extra
/// logical names alias the same storage. Iteration order is the name order,
/// which keeps checkpoints and optimizer sweeps deterministic.
class ParameterRegistry {
 public:
  ParamPtr create(const std::string& name, Index rows, Index cols);
  void add_alias(const std::string& alias, const std::string& target);

  bool has(const std::string& name) const;
  /// Resolves aliases; throws DataError for unknown names.
  ParamPtr at(const std::string& name) const;
  const std::string& canonical(const std::string& name) const;

  const std::map<std::string, ParamPtr>& physical() const { return params_; }
  const std::map<std::string, std::string>& aliases() const { return aliases_; }

  /// Total scalars across distinct storage (aliases counted once).
  Index parameter_count() const;
  Index trainable_count() const;
  /// Scalars across physical tensors whose canonical name starts with prefix.
  Index parameter_count_prefix(const std::string& prefix) const;

 private:
  std::map<std::string, ParamPtr> params_;
  std::map<std::string, std::string> aliases_;
};

}  // namespace daanet
