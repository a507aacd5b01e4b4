#include "kgfuse/graph.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <string>
#include <unordered_map>

#include "kgfuse/error.hpp"
#include "kgfuse/rng.hpp"

namespace kgfuse {

KnowledgeGraph::KnowledgeGraph(std::size_t num_entities, std::vector<Triple> triples)
    : adjacency_(num_entities) {
  std::ranges::sort(triples);
  auto dup = std::ranges::unique(triples);
  triples.erase(dup.begin(), dup.end());
  for (const auto& t : triples) {
    if (t.head >= num_entities || t.tail >= num_entities) {
      throw RangeError("triple (" + std::to_string(t.head) + ", " + std::to_string(t.relation) +
                       ", " + std::to_string(t.tail) + ") references an entity outside [0, " +
                       std::to_string(num_entities) + ")");
    }
    if (t.relation == kSelfRelation) throw ValidationError("SELF relation is reserved");
    ++relation_counts_[t.relation];
    adjacency_[t.head].push_back({t.tail, t.relation});
    if (t.head != t.tail) adjacency_[t.tail].push_back({t.head, t.relation});
  }
  for (std::size_t e = 0; e < num_entities; ++e) {
    auto& adj = adjacency_[e];
    adj.push_back({static_cast<EntityId>(e), kSelfRelation});
    std::ranges::sort(adj);
    auto last = std::ranges::unique(adj);
    adj.erase(last.begin(), last.end());
  }
  triples_ = std::move(triples);
}

std::size_t KnowledgeGraph::data_relation_span() const {
  std::size_t span = 0;
  for (const auto& [r, _] : relation_counts_) {
    if (r < kFirstReservedRelation) span = std::max<std::size_t>(span, std::size_t{r} + 1);
  }
  return span;
}

std::span<const Neighbor> KnowledgeGraph::neighbors(EntityId e) const {
  if (e >= adjacency_.size()) {
    throw RangeError("entity " + std::to_string(e) + " outside [0, " +
                     std::to_string(adjacency_.size()) + ")");
  }
  return adjacency_[e];
}

std::size_t KnowledgeGraph::degree(EntityId e) const {
  std::size_t d = 0;
  EntityId last = std::numeric_limits<EntityId>::max();
  for (const auto& n : neighbors(e)) {
    if (n.entity != e && n.entity != last) ++d;
    last = n.entity;
  }
  return d;
}

KnowledgeGraph KnowledgeGraph::extended(std::size_t extra_entities,
                                        std::span<const Triple> extra) const {
  std::vector<Triple> all = triples_;
  all.insert(all.end(), extra.begin(), extra.end());
  return KnowledgeGraph(num_entities() + extra_entities, std::move(all));
}

Subgraph sample_subgraph(const KnowledgeGraph& graph, EntityId center, std::size_t hops,
                         std::size_t fanout, std::uint64_t seed) {
  if (center >= graph.num_entities()) {
    throw RangeError("subgraph center " + std::to_string(center) + " outside [0, " +
                     std::to_string(graph.num_entities()) + ")");
  }
  if (hops < 1) throw ValidationError("hops must be >= 1");
  if (fanout < 1) throw ValidationError("fanout must be >= 1");

  Rng rng(seed);
  Subgraph sg;
  sg.center = center;
  std::unordered_map<EntityId, std::size_t> local;
  sg.nodes.push_back(center);
  local.emplace(center, 0);

  std::vector<EntityId> frontier{center};
  std::vector<EntityId> candidates;
  for (std::size_t hop = 0; hop < hops && !frontier.empty(); ++hop) {
    std::vector<EntityId> next;
    for (EntityId node : frontier) {
      candidates.clear();
      for (const auto& n : graph.neighbors(node)) {
        if (local.contains(n.entity)) continue;
        if (candidates.empty() || candidates.back() != n.entity) candidates.push_back(n.entity);
      }
      if (candidates.size() > fanout) {
        for (std::size_t i = 0; i < fanout; ++i) {
          const auto j = i + static_cast<std::size_t>(rng.below(candidates.size() - i));
          std::swap(candidates[i], candidates[j]);
        }
        candidates.resize(fanout);
        std::ranges::sort(candidates);
      }
      for (EntityId c : candidates) {
        local.emplace(c, sg.nodes.size());
        sg.nodes.push_back(c);
        next.push_back(c);
      }
    }
    frontier = std::move(next);
  }

  for (std::size_t i = 0; i < sg.nodes.size(); ++i) {
    for (const auto& n : graph.neighbors(sg.nodes[i])) {
      auto it = local.find(n.entity);
      if (it != local.end()) sg.edges.push_back({i, it->second, n.relation});
    }
  }
  return sg;
}

std::vector<std::size_t> bfs_distances(const KnowledgeGraph& graph, EntityId from) {
  if (from >= graph.num_entities()) throw RangeError("bfs source out of range");
  std::vector<std::size_t> dist(graph.num_entities(), std::numeric_limits<std::size_t>::max());
  std::deque<EntityId> queue{from};
  dist[from] = 0;
  while (!queue.empty()) {
    const EntityId u = queue.front();
    queue.pop_front();
    for (const auto& n : graph.neighbors(u)) {
      if (dist[n.entity] == std::numeric_limits<std::size_t>::max()) {
        dist[n.entity] = dist[u] + 1;
        queue.push_back(n.entity);
      }
    }
  }
  return dist;
}

}  // namespace kgfuse
