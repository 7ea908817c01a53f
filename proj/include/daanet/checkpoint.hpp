#pragma once

#include "daanet/model.hpp"

#include <memory>
#include <string>

namespace daanet {

struct LoadedCheckpoint {
  std::unique_ptr<Model> model;
  AdamState state;
};

/// Binary snapshot of config, vocabulary, parameters, optimizer moments, and
/// the alias table, with a trailing CRC32. Writing the load of a checkpoint
/// reproduces it byte for byte.
void save_checkpoint(const std::string& path, const Model& model,
                     const AdamState& state);

/// Rebuilds the model from the stored config and vocabulary, then restores
/// tensor values and moments. Corruption, unknown tensors, or an alias table
/// that disagrees with the rebuilt model raise DataError.
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace daanet
