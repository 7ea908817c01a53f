#include "daanet/train.hpp"

#include <algorithm>
#include <numeric>

namespace daanet {

BatchStream::BatchStream(std::vector<Triplet> data, int batch_size,
                         std::uint64_t seed)
    : data_(std::move(data)), batch_(batch_size), rng_(seed) {
  if (data_.empty()) throw DataError("batch stream: no examples");
  if (batch_ <= 0) throw DataError("batch stream: batch size must be positive");
  order_.resize(data_.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  reshuffle();
}

void BatchStream::reshuffle() {
  std::shuffle(order_.begin(), order_.end(), rng_);
  cursor_ = 0;
}

std::vector<Triplet> BatchStream::next() {
  if (cursor_ >= order_.size()) {
    ++epoch_;
    reshuffle();
  }
  std::size_t take = std::min(static_cast<std::size_t>(batch_),
                              order_.size() - cursor_);
  std::vector<Triplet> batch;
  batch.reserve(take);
  for (std::size_t i = 0; i < take; ++i) batch.push_back(data_[order_[cursor_ + i]]);
  cursor_ += take;
  return batch;
}

std::vector<std::vector<std::string>> vocabulary_corpus(
    const std::vector<Triplet>& triplets) {
  std::vector<std::vector<std::string>> out;
  out.reserve(triplets.size() * 3);
  for (const Triplet& t : triplets) {
    out.push_back(t.question_tokens);
    out.push_back(t.context_tokens);
    out.push_back(t.answer_tokens);
  }
  return out;
}

}  // namespace daanet
