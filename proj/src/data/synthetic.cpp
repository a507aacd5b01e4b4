#include "kgfuse/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kgfuse/error.hpp"
#include "kgfuse/io.hpp"
#include "kgfuse/rng.hpp"

namespace kgfuse {

namespace {

using Matrix = std::vector<std::vector<double>>;

Matrix random_map(std::size_t rows, std::size_t cols, Rng& rng) {
  const double sd = 1.0 / std::sqrt(static_cast<double>(cols));
  Matrix m(rows, std::vector<double>(cols));
  for (auto& r : m)
    for (double& x : r) x = rng.normal(0.0, sd);
  return m;
}

std::vector<double> apply_map(const Matrix& m, const std::vector<double>& z, double noise,
                              Rng& rng) {
  std::vector<double> out(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    out[i] = std::inner_product(m[i].begin(), m[i].end(), z.begin(), 0.0);
    if (noise > 0) out[i] += rng.normal(0.0, noise);
  }
  return out;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  const double dot = std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
  const double na = std::sqrt(std::inner_product(a.begin(), a.end(), a.begin(), 0.0));
  const double nb = std::sqrt(std::inner_product(b.begin(), b.end(), b.begin(), 0.0));
  return (na > 0 && nb > 0) ? dot / (na * nb) : 0.0;
}

// Distinct slots, drawn with probability proportional to 1/(slot+1).
std::vector<std::uint32_t> draw_slots(std::size_t count, std::size_t slots, Rng& rng) {
  std::vector<double> weight(slots);
  for (std::size_t s = 0; s < slots; ++s) weight[s] = 1.0 / static_cast<double>(s + 1);
  std::vector<std::uint32_t> out;
  for (std::size_t k = 0; k < count; ++k) {
    const double total = std::accumulate(weight.begin(), weight.end(), 0.0);
    double u = rng.uniform() * total;
    std::size_t pick = 0;
    while (pick + 1 < slots && (u >= weight[pick] || weight[pick] == 0.0)) {
      u -= weight[pick];
      ++pick;
    }
    out.push_back(static_cast<std::uint32_t>(pick));
    weight[pick] = 0.0;
  }
  std::ranges::sort(out);
  return out;
}

FeatureStore make_features(const SyntheticSpec& spec, const SyntheticDataset& d,
                           std::span<const EntityId> id_of, Rng& rng) {
  FeatureStore fs;
  fs.set_text_dim(spec.text_dim);
  fs.set_image_dim(spec.image_dim);
  for (std::size_t i = 0; i < spec.entities; ++i) {
    const auto& z = d.latents[i];
    fs.set_image(id_of[i], apply_map(d.image_map, z, spec.noise, rng));
    const std::size_t count = 1 + static_cast<std::size_t>(rng.below(spec.max_attributes));
    for (auto slot : draw_slots(count, spec.attribute_slots, rng)) {
      fs.add_attribute(id_of[i], slot, apply_map(d.text_map, z, spec.noise, rng));
    }
  }
  return fs;
}

}  // namespace

SyntheticDataset gen_synthetic(const SyntheticSpec& spec) {
  if (spec.entities < 10) throw ValidationError("synthetic data needs at least 10 entities");
  if (spec.latent_dim < 2) throw ValidationError("latent dim must be >= 2");
  if (spec.noise < 0) throw ValidationError("noise level must be >= 0");
  if (spec.text_dim == 0 || spec.image_dim == 0) throw ValidationError("feature dims must be > 0");
  if (spec.attribute_slots == 0 || spec.max_attributes == 0 ||
      spec.max_attributes > spec.attribute_slots) {
    throw ValidationError("need 1 <= max_attributes <= attribute_slots");
  }
  if (spec.mean_degree <= 0 || spec.relation_buckets == 0) {
    throw ValidationError("mean degree and relation buckets must be positive");
  }
  if (spec.edge_keep <= 0 || spec.edge_keep > 1) throw ValidationError("edge_keep must be in (0, 1]");
  if (spec.interaction_density <= 0 || spec.interaction_density > 1) {
    throw ValidationError("interaction density must be in (0, 1]");
  }

  Rng root(spec.seed);
  Rng latent_rng = root.fork();
  Rng map_rng = root.fork();
  Rng perm_rng = root.fork();
  Rng edge_rng = root.fork();
  Rng feat_rng = root.fork();
  Rng user_rng = root.fork();

  const std::size_t n = spec.entities;
  SyntheticDataset d;
  d.latents.assign(n, std::vector<double>(spec.latent_dim));
  for (auto& z : d.latents)
    for (double& x : z) x = latent_rng.normal();

  d.image_map = random_map(spec.image_dim, spec.latent_dim, map_rng);
  d.text_map = random_map(spec.text_dim, spec.latent_dim, map_rng);

  d.b_of_a.resize(n);
  std::iota(d.b_of_a.begin(), d.b_of_a.end(), EntityId{0});
  perm_rng.shuffle(d.b_of_a);

  struct Pair {
    double cos;
    EntityId i, j;
  };
  std::vector<Pair> pairs;
  pairs.reserve(n * (n - 1) / 2);
  for (EntityId i = 0; i < n; ++i)
    for (EntityId j = i + 1; j < n; ++j) pairs.push_back({cosine(d.latents[i], d.latents[j]), i, j});
  std::ranges::stable_sort(pairs, [](const Pair& x, const Pair& y) { return x.cos > y.cos; });
  const auto edges = std::min(
      pairs.size(),
      static_cast<std::size_t>(std::llround(spec.mean_degree * static_cast<double>(n) / 2.0)));
  d.edge_threshold = edges ? pairs[edges - 1].cos : 1.0;

  std::vector<Triple> ta, tb;
  const double span = std::max(1e-12, 1.0 - d.edge_threshold);
  for (std::size_t k = 0; k < edges; ++k) {
    const auto& p = pairs[k];
    auto bucket = static_cast<RelationId>((p.cos - d.edge_threshold) / span *
                                          static_cast<double>(spec.relation_buckets));
    bucket = std::min<RelationId>(bucket, static_cast<RelationId>(spec.relation_buckets - 1));
    if (edge_rng.uniform() < spec.edge_keep) ta.push_back({p.i, bucket, p.j});
    if (edge_rng.uniform() < spec.edge_keep) {
      const EntityId bi = d.b_of_a[p.i], bj = d.b_of_a[p.j];
      tb.push_back({std::min(bi, bj), bucket, std::max(bi, bj)});
    }
  }
  d.graph_a = KnowledgeGraph(n, std::move(ta));
  d.graph_b = KnowledgeGraph(n, std::move(tb));

  std::vector<EntityId> identity(n);
  std::iota(identity.begin(), identity.end(), EntityId{0});
  d.features_a = make_features(spec, d, identity, feat_rng);
  d.features_b = make_features(spec, d, d.b_of_a, feat_rng);

  for (EntityId i = 0; i < n; ++i) d.alignments.positives.push_back({i, d.b_of_a[i]});

  d.user_latents.assign(spec.users, std::vector<double>(spec.latent_dim));
  for (auto& u : d.user_latents)
    for (double& x : u) x = user_rng.normal();
  for (UserId u = 0; u < spec.users; ++u) {
    for (EntityId i = 0; i < n; ++i) {
      if (user_rng.uniform() >= spec.interaction_density) continue;
      const double c = cosine(d.user_latents[u], d.latents[i]);
      int rating;
      if (c > 0) rating = c > 0.3 ? 5 : 4;
      else rating = c < -0.3 ? 1 : 2;
      d.ratings.push_back({u, i, rating});
    }
  }
  d.interactions = binarize_interactions(d.ratings);
  return d;
}

void write_synthetic(const std::filesystem::path& dir, const SyntheticDataset& data,
                     std::uint64_t split_seed) {
  write_graph(dir / "graph_a", data.graph_a, data.features_a);
  write_graph(dir / "graph_b", data.graph_b, data.features_b);

  write_alignments(dir / "alignments.tsv", data.alignments);
  const auto [align_train, align_test] =
      split_indices(data.alignments.positives.size(), 0.1, Rng::mix(split_seed, 1));
  AlignmentSet train, test;
  for (auto i : align_train) train.positives.push_back(data.alignments.positives[i]);
  for (auto i : align_test) test.positives.push_back(data.alignments.positives[i]);
  write_alignments(dir / "alignments_train.tsv", train);
  write_alignments(dir / "alignments_test.tsv", test);

  write_ratings(dir / "interactions.tsv", data.ratings);
  const auto [rate_train, rate_test] =
      split_indices(data.ratings.size(), 0.1, Rng::mix(split_seed, 2));
  std::vector<RawRating> r_train, r_test;
  for (auto i : rate_train) r_train.push_back(data.ratings[i]);
  for (auto i : rate_test) r_test.push_back(data.ratings[i]);
  write_ratings(dir / "interactions_train.tsv", r_train);
  write_ratings(dir / "interactions_test.tsv", r_test);
}

}  // namespace kgfuse
