#pragma once

#include "daanet/squad.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace daanet {

/// Deals shuffled batches, reshuffling at each epoch boundary. The final
/// batch of an epoch may be short.
class BatchStream {
 public:
  BatchStream(std::vector<Triplet> data, int batch_size, std::uint64_t seed);

  std::vector<Triplet> next();
  std::int64_t epoch() const { return epoch_; }
  std::size_t size() const { return data_.size(); }

 private:
  std::vector<Triplet> data_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  int batch_;
  std::int64_t epoch_ = 0;
  std::mt19937_64 rng_;

  void reshuffle();
};

/// Word sequences a vocabulary should be counted over: every question,
/// context, and answer of the corpus.
std::vector<std::vector<std::string>> vocabulary_corpus(
    const std::vector<Triplet>& triplets);

}  // namespace daanet
