#include <algorithm>
#include <cmath>
#include <iterator>

#include "kgfuse/error.hpp"
#include "kgfuse/training.hpp"

namespace kgfuse {

namespace {

KnowledgeGraph with_users(const KnowledgeGraph& items, std::size_t num_users,
                          const std::vector<UserItem>& links) {
  std::vector<Triple> extra;
  extra.reserve(links.size());
  const auto base = static_cast<EntityId>(items.num_entities());
  for (const auto& l : links) extra.push_back({base + l.user, kInteractRelation, l.item});
  return items.extended(num_users, extra);
}

std::uint64_t pair_key(UserItem p) { return (std::uint64_t{p.user} << 32) | p.item; }

template <typename T>
std::vector<T> sorted_unique(std::vector<T> v) {
  std::ranges::sort(v);
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

std::size_t position(const std::vector<std::uint32_t>& sorted, std::uint32_t x) {
  return static_cast<std::size_t>(std::ranges::lower_bound(sorted, x) - sorted.begin());
}

}  // namespace

RecContext::RecContext(const KnowledgeGraph& items, const FeatureStore& features,
                       std::size_t num_users, std::vector<UserItem> links, std::size_t path_len,
                       std::size_t max_paths)
    : items_(&items),
      features_(&features),
      num_items_(items.num_entities()),
      num_users_(num_users),
      links_(sorted_unique(std::move(links))),
      path_len_(path_len),
      max_paths_(max_paths) {
  for (const auto& l : links_) check_pair(l);
  graph_ = with_users(items, num_users, links_);
}

EntityId RecContext::user_node(UserId u) const {
  if (u >= num_users_) {
    throw RangeError("user " + std::to_string(u) + " outside [0, " + std::to_string(num_users_) +
                     ")");
  }
  return static_cast<EntityId>(num_items_ + u);
}

void RecContext::check_pair(UserItem p) const {
  user_node(p.user);
  if (p.item >= num_items_) {
    throw RangeError("item " + std::to_string(p.item) + " outside [0, " +
                     std::to_string(num_items_) + ")");
  }
}

const std::vector<std::pair<RelationId, double>>& RecContext::paths(UserItem p) const {
  const auto key = pair_key(p);
  auto it = cache_.find(key);
  if (it == cache_.end()) {
    it = cache_
             .emplace(key, path_weights(shortest_paths(graph_, user_node(p.user), p.item,
                                                       path_len_, max_paths_, true)))
             .first;
  }
  return it->second;
}

RecContext RecContext::without(std::span<const UserItem> hidden) const {
  const auto drop = sorted_unique(std::vector<UserItem>(hidden.begin(), hidden.end()));
  std::vector<UserItem> kept;
  std::ranges::set_difference(links_, drop, std::back_inserter(kept));
  return RecContext(*items_, *features_, num_users_, std::move(kept), path_len_, max_paths_);
}

void add_recommendation_params(EncoderModel& model, std::size_t num_users, std::size_t num_items,
                               Rng& rng) {
  auto& p = model.params;
  const std::size_t d = model.config.dim;
  if (!p.contains("rec.v_interact")) p.add("rec.v_interact", Tensor::full(1, d, 1.0));
  if (!p.contains("rec.v_path")) p.add_zeros("rec.v_path", 1, d);
  if (!p.contains("rec.path.w")) p.add_weight("rec.path.w", d, d, rng);
  if (!p.contains("rec.user.emb")) {
    p.add_weight("rec.user.emb", std::max<std::size_t>(num_users, 1), d, rng);
  }
  if (model.config.fusion == FusionStrategy::kAttentionPool) {
    if (!p.contains("profile.user")) p.add_zeros("profile.user", std::max<std::size_t>(num_users, 1), d);
    if (!p.contains("profile.item")) p.add_zeros("profile.item", std::max<std::size_t>(num_items, 1), d);
    for (const char* side : {"fusion.user", "fusion.item"}) {
      if (!p.contains(std::string(side) + ".w")) p.add_weight(std::string(side) + ".w", d, 2, rng);
      if (!p.contains(std::string(side) + ".b")) p.add_zeros(std::string(side) + ".b", 1, 2);
    }
  }
}

Tensor rec_logits(const EncoderModel& model, const RecContext& ctx,
                  std::span<const UserItem> pairs, std::uint64_t subgraph_seed,
                  Rng* dropout_rng) {
  if (pairs.empty()) throw ContractError("rec_logits needs at least one pair");
  const auto& p = model.params;
  std::vector<std::uint32_t> users, items;
  for (const auto& x : pairs) {
    ctx.check_pair(x);
    users.push_back(x.user);
    items.push_back(x.item);
  }
  users = sorted_unique(std::move(users));
  items = sorted_unique(std::move(items));

  std::vector<EntityId> centers;
  for (auto u : users) centers.push_back(ctx.user_node(u));
  centers.insert(centers.end(), items.begin(), items.end());

  EncodeOptions opt{.subgraph_seed = subgraph_seed,
                    .dropout_rng = dropout_rng,
                    .node_table = &p["rec.user.emb"],
                    .node_table_base = static_cast<EntityId>(ctx.num_items())};
  Tensor personal;
  if (model.config.fusion == FusionStrategy::kAttentionPool) {
    const std::vector<std::size_t> u_rows(users.begin(), users.end());
    const std::vector<std::size_t> i_rows(items.begin(), items.end());
    personal = concat_rows(
        {personalized_fusion_logits(gather_rows(p["profile.user"], u_rows), "fusion.user", p),
         personalized_fusion_logits(gather_rows(p["profile.item"], i_rows), "fusion.item", p)});
    opt.personal_logits = &personal;
  }
  const auto enc = encode_batch(model, ctx.graph(), ctx.features(), centers, opt);

  std::vector<std::size_t> u_pos, i_pos;
  const Tensor& rel = p["rel.emb"];
  std::vector<double> path_mix(pairs.size() * rel.rows(), 0.0);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    u_pos.push_back(position(users, pairs[k].user));
    i_pos.push_back(users.size() + position(items, pairs[k].item));
    for (const auto& [r, w] : ctx.paths(pairs[k])) {
      path_mix[k * rel.rows() + model.relation_row(r)] += w;
    }
  }
  const Tensor interaction = mul(gather_rows(enc.z, u_pos), gather_rows(enc.z, i_pos));
  const Tensor path = matmul(
      matmul(Tensor::from({pairs.size(), rel.rows()}, std::move(path_mix)), rel), p["rec.path.w"]);
  return add(matmul(interaction, transpose(p["rec.v_interact"])),
             matmul(path, transpose(p["rec.v_path"])));
}

std::vector<double> predict(const EncoderModel& model, const RecContext& ctx,
                            std::span<const UserItem> pairs, std::uint64_t seed) {
  NoGradGuard no_grad;
  std::vector<double> out;
  out.reserve(pairs.size());
  constexpr std::size_t kChunk = 1024;
  for (std::size_t start = 0; start < pairs.size(); start += kChunk) {
    const auto chunk = pairs.subspan(start, std::min(kChunk, pairs.size() - start));
    const Tensor logits = rec_logits(model, ctx, chunk, seed);
    for (double x : logits.data()) {
      const double prob = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      // Saturated logits would round to exactly 0 or 1.
      out.push_back(std::clamp(prob, std::nextafter(0.0, 1.0), std::nextafter(1.0, 0.0)));
    }
  }
  return out;
}

}  // namespace kgfuse
