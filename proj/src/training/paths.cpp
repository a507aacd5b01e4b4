#include <deque>
#include <limits>
#include <map>

#include "kgfuse/error.hpp"
#include "kgfuse/training.hpp"

namespace kgfuse {

namespace {

constexpr std::size_t kUnreached = std::numeric_limits<std::size_t>::max();

bool usable(const Neighbor& n, EntityId at, EntityId from, EntityId to, bool skip_direct) {
  if (n.relation == kSelfRelation) return false;
  if (skip_direct && ((at == from && n.entity == to) || (at == to && n.entity == from))) return false;
  return true;
}

std::vector<std::size_t> distances(const KnowledgeGraph& g, EntityId source, std::size_t limit,
                                   EntityId from, EntityId to, bool skip_direct) {
  std::vector<std::size_t> dist(g.num_entities(), kUnreached);
  std::deque<EntityId> queue{source};
  dist[source] = 0;
  while (!queue.empty()) {
    const EntityId x = queue.front();
    queue.pop_front();
    if (dist[x] == limit) continue;
    for (const auto& n : g.neighbors(x)) {
      if (!usable(n, x, from, to, skip_direct) || dist[n.entity] != kUnreached) continue;
      dist[n.entity] = dist[x] + 1;
      queue.push_back(n.entity);
    }
  }
  return dist;
}

}  // namespace

std::vector<std::vector<RelationId>> shortest_paths(const KnowledgeGraph& graph, EntityId from,
                                                    EntityId to, std::size_t max_len,
                                                    std::size_t max_paths, bool skip_direct) {
  if (from >= graph.num_entities() || to >= graph.num_entities()) {
    throw RangeError("path endpoint outside the graph");
  }
  std::vector<std::vector<RelationId>> out;
  if (from == to || max_paths == 0) return out;
  const auto d_from = distances(graph, from, max_len, from, to, skip_direct);
  const std::size_t len = d_from[to];
  if (len == kUnreached) return out;
  const auto d_to = distances(graph, to, len, from, to, skip_direct);

  // Depth-first walk over edges that stay on some shortest path.
  std::vector<RelationId> current;
  auto walk = [&](auto&& self, EntityId at) -> void {
    if (out.size() >= max_paths) return;
    if (at == to) {
      out.push_back(current);
      return;
    }
    const std::size_t k = current.size();
    for (const auto& n : graph.neighbors(at)) {
      if (!usable(n, at, from, to, skip_direct)) continue;
      if (d_from[n.entity] != k + 1 || d_to[n.entity] != len - k - 1) continue;
      current.push_back(n.relation);
      self(self, n.entity);
      current.pop_back();
      if (out.size() >= max_paths) return;
    }
  };
  walk(walk, from);
  return out;
}

std::vector<std::pair<RelationId, double>> path_weights(
    const std::vector<std::vector<RelationId>>& paths) {
  std::map<RelationId, double> w;
  for (const auto& p : paths) {
    const double each = 1.0 / (static_cast<double>(p.size()) * static_cast<double>(paths.size()));
    for (RelationId r : p) w[r] += each;
  }
  return {w.begin(), w.end()};
}

std::vector<double> path_features(const KnowledgeGraph& graph, EntityId from, EntityId to,
                                  const EncoderModel& model, std::size_t max_len,
                                  std::size_t max_paths, bool skip_direct) {
  const Tensor& table = model.params["rel.emb"];
  std::vector<double> out(table.cols(), 0.0);
  for (const auto& [r, w] :
       path_weights(shortest_paths(graph, from, to, max_len, max_paths, skip_direct))) {
    const auto row = table.row_values(model.relation_row(r));
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += w * row[k];
  }
  return out;
}

}  // namespace kgfuse
