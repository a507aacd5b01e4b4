#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

namespace kgfuse {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;

// Relation ids at the top of the range are reserved for structural edges the
// engine adds itself. Data files may not use them.
inline constexpr RelationId kSelfRelation = 0xFFFFFFFFu;
inline constexpr RelationId kInteractRelation = 0xFFFFFFFEu;
inline constexpr RelationId kFirstReservedRelation = kInteractRelation;

struct Triple {
  EntityId head = 0;
  RelationId relation = 0;
  EntityId tail = 0;
  friend auto operator<=>(const Triple&, const Triple&) = default;
};

struct Neighbor {
  EntityId entity = 0;
  RelationId relation = 0;
  friend auto operator<=>(const Neighbor&, const Neighbor&) = default;
};

// Directed multigraph of typed triples. Message passing treats every triple
// as usable in both directions, and every entity carries a SELF loop so each
// node has at least one incident edge.
class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;
  // Duplicate triples are dropped; ids must be < num_entities.
  KnowledgeGraph(std::size_t num_entities, std::vector<Triple> triples);

  std::size_t num_entities() const { return adjacency_.size(); }
  const std::vector<Triple>& triples() const { return triples_; }
  // Triples per relation id (reserved ids included when used).
  const std::map<RelationId, std::size_t>& relation_counts() const { return relation_counts_; }
  // One past the largest non-reserved relation id; 0 when there are none.
  std::size_t data_relation_span() const;

  // Sorted by (entity, relation); includes the SELF loop.
  std::span<const Neighbor> neighbors(EntityId e) const;
  // Distinct neighbouring entities other than e itself.
  std::size_t degree(EntityId e) const;

  // A copy with `extra_entities` appended and extra triples added.
  KnowledgeGraph extended(std::size_t extra_entities, std::span<const Triple> extra) const;

  friend bool operator==(const KnowledgeGraph& a, const KnowledgeGraph& b) {
    return a.triples_ == b.triples_ && a.adjacency_.size() == b.adjacency_.size();
  }

 private:
  std::vector<Triple> triples_;
  std::map<RelationId, std::size_t> relation_counts_;
  std::vector<std::vector<Neighbor>> adjacency_;
};

struct SubgraphEdge {
  std::size_t dst = 0;  // local node index receiving the message
  std::size_t src = 0;  // local node index sending it
  RelationId relation = 0;
};

// Local neighbourhood of `center`. nodes[0] is the center; edges use local
// indices into nodes and are all graph edges among the sampled nodes.
struct Subgraph {
  EntityId center = 0;
  std::vector<EntityId> nodes;
  std::vector<SubgraphEdge> edges;
};

// Breadth-first expansion for `hops` rounds. Each expanded node contributes at
// most `fanout` not-yet-visited neighbours, sampled without replacement.
Subgraph sample_subgraph(const KnowledgeGraph& graph, EntityId center, std::size_t hops,
                         std::size_t fanout, std::uint64_t seed);

// Hop distance from `from` to every entity (SIZE_MAX when unreachable).
std::vector<std::size_t> bfs_distances(const KnowledgeGraph& graph, EntityId from);

}  // namespace kgfuse
