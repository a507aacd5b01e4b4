#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <unordered_set>
#include <vector>

#include "kgfuse/graph.hpp"
#include "kgfuse/records.hpp"

namespace kgfuse {

// Fixed-capacity ring buffer of recent graph-B embeddings used as
// contrastive negatives. Once full, each push overwrites the oldest slot.
class MemoryBank {
 public:
  struct Slot {
    EntityId entity = 0;
    std::vector<double> embedding;
  };

  MemoryBank(std::size_t capacity, std::size_t dim);

  void push(EntityId entity, std::span<const double> embedding);
  std::size_t size() const { return slots_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t dim() const { return dim_; }
  const Slot& slot(std::size_t i) const { return slots_.at(i); }
  const std::vector<Slot>& slots() const { return slots_; }

 private:
  std::size_t capacity_;
  std::size_t dim_;
  std::size_t cursor_ = 0;
  std::vector<Slot> slots_;
};

// Set of (a, b) pairs a negative must never be drawn from.
class PairExclusion {
 public:
  PairExclusion() = default;
  explicit PairExclusion(std::span<const AlignedPair> pairs);
  void insert(AlignedPair p) { keys_.insert(key(p)); }
  bool contains(AlignedPair p) const { return keys_.contains(key(p)); }

 private:
  static std::uint64_t key(AlignedPair p) { return (std::uint64_t{p.a} << 32) | p.b; }
  std::unordered_set<std::uint64_t> keys_;
};

struct NegativeRef {
  enum class Source { kBatch, kBank };
  Source source = Source::kBatch;
  std::size_t index = 0;  // batch position or bank slot
  EntityId entity = 0;    // graph-B id of the negative
  friend bool operator==(const NegativeRef&, const NegativeRef&) = default;
};

// Number of candidates anchor `i` could draw from.
std::size_t available_negatives(std::span<const AlignedPair> batch, std::size_t i,
                                const MemoryBank& bank, const PairExclusion& exclusion);

// For each anchor, `num` distinct candidates drawn uniformly without
// replacement from the other graph's in-batch entities and the bank, never a
// pair in `exclusion`. Throws SamplingError when an anchor has fewer than `num`.
std::vector<std::vector<NegativeRef>> sample_negatives(std::span<const AlignedPair> batch,
                                                       const MemoryBank& bank, std::size_t num,
                                                       const PairExclusion& exclusion,
                                                       std::uint64_t seed);

}  // namespace kgfuse
