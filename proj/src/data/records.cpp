#include "kgfuse/records.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include "kgfuse/error.hpp"
#include "kgfuse/rng.hpp"

namespace kgfuse {

void AlignmentSet::validate(std::size_t entities_a, std::size_t entities_b) const {
  std::set<AlignedPair> seen;
  for (const auto& p : positives) {
    if (p.a >= entities_a || p.b >= entities_b) {
      throw ValidationError("alignment (" + std::to_string(p.a) + ", " + std::to_string(p.b) +
                            ") references an unknown entity");
    }
    if (!seen.insert(p).second) {
      throw ValidationError("duplicate alignment (" + std::to_string(p.a) + ", " +
                            std::to_string(p.b) + ")");
    }
  }
}

std::size_t InteractionSet::num_users() const {
  std::size_t n = 0;
  for (const auto& r : records) n = std::max<std::size_t>(n, std::size_t{r.user} + 1);
  return n;
}

std::size_t InteractionSet::positives() const {
  return static_cast<std::size_t>(
      std::ranges::count_if(records, [](const Interaction& r) { return r.label == 1; }));
}

void InteractionSet::validate() const {
  std::set<std::pair<UserId, EntityId>> seen;
  for (const auto& r : records) {
    if (r.label != 0 && r.label != 1) {
      throw ValidationError("interaction label must be 0 or 1, got " + std::to_string(r.label));
    }
    if (!seen.emplace(r.user, r.item).second) {
      throw ValidationError("duplicate interaction (user " + std::to_string(r.user) +
                            ", item " + std::to_string(r.item) + ")");
    }
  }
}

InteractionSet binarize_interactions(std::span<const RawRating> ratings) {
  InteractionSet out;
  for (const auto& r : ratings) {
    if (r.rating < 1 || r.rating > 5) {
      throw ValidationError("rating " + std::to_string(r.rating) + " outside 1..5 (user " +
                            std::to_string(r.user) + ", item " + std::to_string(r.item) + ")");
    }
    if (r.rating == 3) continue;
    out.records.push_back({r.user, r.item, r.rating >= 4 ? 1 : 0});
  }
  out.validate();
  return out;
}

std::vector<std::uint32_t> select_top_k_attributes(
    const std::map<std::uint32_t, std::size_t>& usage_counts, std::size_t k) {
  if (k == 0) throw ValidationError("attribute filter K must be >= 1");
  std::vector<std::pair<std::uint32_t, std::size_t>> items(usage_counts.begin(),
                                                           usage_counts.end());
  std::ranges::stable_sort(items, [](const auto& x, const auto& y) {
    return x.second != y.second ? x.second > y.second : x.first < y.first;
  });
  std::vector<std::uint32_t> out;
  for (std::size_t i = 0; i < std::min(k, items.size()); ++i) out.push_back(items[i].first);
  return out;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n,
                                                                           double fraction,
                                                                           std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(idx);
  auto second = static_cast<std::size_t>(std::llround(static_cast<double>(n) * fraction));
  if (n >= 2) second = std::clamp<std::size_t>(second, 1, n - 1);
  else second = 0;
  std::vector<std::size_t> b(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(second));
  std::vector<std::size_t> a(idx.begin() + static_cast<std::ptrdiff_t>(second), idx.end());
  std::ranges::sort(a);
  std::ranges::sort(b);
  return {std::move(a), std::move(b)};
}

}  // namespace kgfuse
