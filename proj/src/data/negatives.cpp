#include "kgfuse/negatives.hpp"

#include <string>

#include "kgfuse/error.hpp"
#include "kgfuse/rng.hpp"

namespace kgfuse {

MemoryBank::MemoryBank(std::size_t capacity, std::size_t dim) : capacity_(capacity), dim_(dim) {
  if (capacity == 0) throw ValidationError("memory bank capacity must be positive");
  slots_.reserve(capacity);
}

void MemoryBank::push(EntityId entity, std::span<const double> embedding) {
  if (embedding.size() != dim_) {
    throw DimensionError("memory bank expects dim " + std::to_string(dim_) + ", got " +
                         std::to_string(embedding.size()));
  }
  Slot s{entity, {embedding.begin(), embedding.end()}};
  if (slots_.size() < capacity_) {
    slots_.push_back(std::move(s));
  } else {
    slots_[cursor_] = std::move(s);
  }
  cursor_ = (cursor_ + 1) % capacity_;
}

PairExclusion::PairExclusion(std::span<const AlignedPair> pairs) {
  for (const auto& p : pairs) insert(p);
}

namespace {

std::vector<NegativeRef> candidates_for(std::span<const AlignedPair> batch, std::size_t i,
                                        const MemoryBank& bank, const PairExclusion& exclusion) {
  const EntityId anchor = batch[i].a;
  std::vector<NegativeRef> out;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    if (!exclusion.contains({anchor, batch[k].b}) && batch[k].b != batch[i].b)
      out.push_back({NegativeRef::Source::kBatch, k, batch[k].b});
  }
  for (std::size_t s = 0; s < bank.size(); ++s) {
    const EntityId e = bank.slot(s).entity;
    if (!exclusion.contains({anchor, e}) && e != batch[i].b)
      out.push_back({NegativeRef::Source::kBank, s, e});
  }
  return out;
}

}  // namespace

std::size_t available_negatives(std::span<const AlignedPair> batch, std::size_t i,
                                const MemoryBank& bank, const PairExclusion& exclusion) {
  return candidates_for(batch, i, bank, exclusion).size();
}

std::vector<std::vector<NegativeRef>> sample_negatives(std::span<const AlignedPair> batch,
                                                       const MemoryBank& bank, std::size_t num,
                                                       const PairExclusion& exclusion,
                                                       std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<NegativeRef>> out;
  out.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto pool = candidates_for(batch, i, bank, exclusion);
    if (pool.size() < num) {
      throw SamplingError("anchor " + std::to_string(batch[i].a) + " needs " +
                          std::to_string(num) + " negatives but only " +
                          std::to_string(pool.size()) + " are available");
    }
    for (std::size_t k = 0; k < num; ++k) {
      const auto j = k + static_cast<std::size_t>(rng.below(pool.size() - k));
      std::swap(pool[k], pool[j]);
    }
    pool.resize(num);
    out.push_back(std::move(pool));
  }
  return out;
}

}  // namespace kgfuse
