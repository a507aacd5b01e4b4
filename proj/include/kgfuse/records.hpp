#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "kgfuse/graph.hpp"

namespace kgfuse {

using UserId = std::uint32_t;

struct AlignedPair {
  EntityId a = 0;  // id in graph A
  EntityId b = 0;  // id in graph B
  friend auto operator<=>(const AlignedPair&, const AlignedPair&) = default;
};

struct AlignmentSet {
  std::vector<AlignedPair> positives;

  // Rejects duplicate pairs and ids outside either graph.
  void validate(std::size_t entities_a, std::size_t entities_b) const;
  friend bool operator==(const AlignmentSet&, const AlignmentSet&) = default;
};

struct RawRating {
  UserId user = 0;
  EntityId item = 0;
  int rating = 0;
  friend bool operator==(const RawRating&, const RawRating&) = default;
};

struct Interaction {
  UserId user = 0;
  EntityId item = 0;  // entity id in the item graph
  int label = 0;      // 0 or 1
  friend bool operator==(const Interaction&, const Interaction&) = default;
};

struct InteractionSet {
  std::vector<Interaction> records;

  std::size_t num_users() const;
  std::size_t positives() const;
  // Rejects non-binary labels and duplicate (user, item) pairs.
  void validate() const;
  friend bool operator==(const InteractionSet&, const InteractionSet&) = default;
};

// Ratings >= 4 become positives, <= 2 negatives, 3 is dropped.
InteractionSet binarize_interactions(std::span<const RawRating> ratings);

// The min(k, distinct) most used attribute slots, most frequent first, ties
// broken by the smaller slot id.
std::vector<std::uint32_t> select_top_k_attributes(
    const std::map<std::uint32_t, std::size_t>& usage_counts, std::size_t k);

// Seeded split of `n` indices into (first, second) with round(n * fraction)
// in the second part, at least one on each side when n >= 2.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n,
                                                                           double fraction,
                                                                           std::uint64_t seed);

}  // namespace kgfuse
