#include <algorithm>
#include <string>
#include <unordered_map>
#include <vector>

#include "kgfuse/encoder.hpp"
#include "kgfuse/error.hpp"

namespace kgfuse {

FusionStrategy parse_fusion(std::string_view name) {
  if (name == "gated") return FusionStrategy::kGated;
  if (name == "concat_project") return FusionStrategy::kConcatProject;
  if (name == "attention_pool") return FusionStrategy::kAttentionPool;
  throw ConfigError("unknown fusion strategy '" + std::string(name) +
                    "' (expected gated, concat_project or attention_pool)");
}

std::string_view fusion_name(FusionStrategy s) {
  switch (s) {
    case FusionStrategy::kGated: return "gated";
    case FusionStrategy::kConcatProject: return "concat_project";
    case FusionStrategy::kAttentionPool: return "attention_pool";
  }
  return "?";
}

void EncoderConfig::validate() const {
  if (dim == 0) throw ConfigError("d must be positive");
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError("d = " + std::to_string(dim) + " is not divisible by heads = " +
                      std::to_string(heads));
  }
  if (layers < 1) throw ConfigError("L must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
  if (hops < 1) throw ConfigError("hops must be >= 1");
  if (fanout < 1) throw ConfigError("fanout must be >= 1");
}

std::size_t EncoderModel::relation_row(RelationId r) const {
  if (r == kSelfRelation) return num_relations;
  if (r == kInteractRelation) return num_relations + 1;
  if (r >= num_relations) {
    throw ValidationError("relation id " + std::to_string(r) + " is outside the model's " +
                          std::to_string(num_relations) + " relations");
  }
  return r;
}

EncoderModel make_encoder(const EncoderConfig& config, std::size_t text_dim,
                          std::size_t image_dim, std::size_t num_relations, Rng& rng) {
  config.validate();
  EncoderModel m;
  m.config = config;
  m.text_dim = text_dim;
  m.image_dim = image_dim;
  m.num_relations = num_relations;
  auto& p = m.params;
  const std::size_t d = config.dim;

  if (text_dim > 0) {
    p.add_weight("attr.query", text_dim, 1, rng);
    p.add_weight("attr.proj.w", text_dim, d, rng);
    p.add_zeros("attr.proj.b", 1, d);
  }
  if (image_dim > 0) {
    p.add_weight("image.proj.w", image_dim, d, rng);
    p.add_zeros("image.proj.b", 1, d);
  }
  p.add_weight("cold.text", 1, d, rng);
  p.add_weight("cold.image", 1, d, rng);

  for (const char* dir : {"fuse.t2i", "fuse.i2t"}) {
    for (const char* w : {".wq", ".wk", ".wv"}) p.add_weight(std::string(dir) + w, d, d, rng);
  }
  p.add_weight("fuse.out.w", d, d, rng);
  p.add_zeros("fuse.out.b", 1, d);

  p.add_weight("rel.emb", num_relations + 2, d, rng);
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::string g = "gat." + std::to_string(l);
    p.add_weight(g + ".wh", d, d, rng);
    p.add_weight(g + ".wr", d, d, rng);
    p.add_weight(g + ".a", 3 * d, 1, rng);
  }
  p.add_weight("jk.w", d, d, rng);
  p.add_zeros("jk.b", 1, d);

  switch (config.fusion) {
    case FusionStrategy::kGated:
      p.add_weight("agg.gate.w", 2 * d, d, rng);
      p.add_zeros("agg.gate.b", 1, d);
      break;
    case FusionStrategy::kConcatProject:
      p.add_weight("agg.concat.w", 2 * d, d, rng);
      p.add_zeros("agg.concat.b", 1, d);
      break;
    case FusionStrategy::kAttentionPool:
      p.add_weight("agg.pool.query", d, 1, rng);
      break;
  }
  return m;
}

namespace {

// Per-entity fused multimodal vectors for `entities`, one row each.
Tensor multimodal_table(const EncoderModel& model, const FeatureStore& features,
                        std::span<const EntityId> entities) {
  const auto& p = model.params;
  const std::size_t n = entities.size();

  if (model.text_dim > 0 && features.text_dim() > 0 && features.text_dim() != model.text_dim) {
    throw SchemaError("text features have dim " + std::to_string(features.text_dim()) +
                      " but the model expects " + std::to_string(model.text_dim));
  }
  if (model.image_dim > 0 && features.image_dim() > 0 && features.image_dim() != model.image_dim) {
    throw SchemaError("image features have dim " + std::to_string(features.image_dim()) +
                      " but the model expects " + std::to_string(model.image_dim));
  }

  // Warm rows first, the learned cold default as the last row.
  std::vector<std::size_t> text_pick(n), image_pick(n);
  Tensor text_table = p["cold.text"];
  if (model.text_dim > 0) {
    std::vector<double> rows;
    std::vector<std::size_t> owner;
    std::size_t warm = 0;
    std::vector<std::size_t> warm_of(n, SIZE_MAX);
    for (std::size_t i = 0; i < n; ++i) {
      const auto* attrs = features.text(entities[i]);
      if (!attrs || attrs->empty()) continue;
      for (const auto& a : *attrs) {
        rows.insert(rows.end(), a.values.begin(), a.values.end());
        owner.push_back(warm);
      }
      warm_of[i] = warm++;
    }
    if (warm > 0) {
      const Tensor attrs = Tensor::from({owner.size(), model.text_dim}, std::move(rows));
      text_table = concat_rows({aggregate_attributes(attrs, owner, warm, p).out, p["cold.text"]});
    }
    for (std::size_t i = 0; i < n; ++i) text_pick[i] = warm_of[i] == SIZE_MAX ? warm : warm_of[i];
  }

  Tensor image_table = p["cold.image"];
  if (model.image_dim > 0) {
    std::vector<double> rows;
    std::size_t warm = 0;
    std::vector<std::size_t> warm_of(n, SIZE_MAX);
    for (std::size_t i = 0; i < n; ++i) {
      const auto* v = features.image(entities[i]);
      if (!v) continue;
      rows.insert(rows.end(), v->begin(), v->end());
      warm_of[i] = warm++;
    }
    if (warm > 0) {
      const Tensor x = Tensor::from({warm, model.image_dim}, std::move(rows));
      image_table =
          concat_rows({add(matmul(x, p["image.proj.w"]), p["image.proj.b"]), p["cold.image"]});
    }
    for (std::size_t i = 0; i < n; ++i) image_pick[i] = warm_of[i] == SIZE_MAX ? warm : warm_of[i];
  }

  return cross_modal_fuse(gather_rows(text_table, text_pick), gather_rows(image_table, image_pick),
                          model.config.heads, p)
      .out;
}

}  // namespace

BatchEncoding encode_batch(const EncoderModel& model, const KnowledgeGraph& graph,
                           const FeatureStore& features, std::span<const EntityId> centers,
                           const EncodeOptions& options) {
  const auto& cfg = model.config;
  const auto& p = model.params;
  if (centers.empty()) throw ContractError("encode_batch needs at least one center");

  // Disjoint union of the per-center subgraphs.
  std::vector<EntityId> unique;
  std::unordered_map<EntityId, std::size_t> unique_of;
  std::vector<std::size_t> node_unique;
  std::vector<std::size_t> center_rows;
  EdgeList edges;
  for (EntityId c : centers) {
    const Subgraph sg =
        sample_subgraph(graph, c, cfg.hops, cfg.fanout, Rng::mix(options.subgraph_seed, c));
    const std::size_t offset = node_unique.size();
    center_rows.push_back(offset);
    for (EntityId e : sg.nodes) {
      auto [it, inserted] = unique_of.try_emplace(e, unique.size());
      if (inserted) unique.push_back(e);
      node_unique.push_back(it->second);
    }
    for (const auto& e : sg.edges) {
      edges.dst.push_back(offset + e.dst);
      edges.src.push_back(offset + e.src);
      edges.relation_row.push_back(model.relation_row(e.relation));
    }
  }
  edges.num_nodes = node_unique.size();

  Tensor fused;
  if (!options.node_table) {
    fused = multimodal_table(model, features, unique);
  } else {
    // Feature rows first, then table rows.
    std::vector<EntityId> featured;
    std::vector<std::size_t> table_rows;
    for (EntityId e : unique) {
      if (e < options.node_table_base) {
        featured.push_back(e);
        continue;
      }
      const std::size_t row = e - options.node_table_base;
      if (row >= options.node_table->rows()) {
        throw RangeError("entity " + std::to_string(e) + " has no node table row");
      }
      table_rows.push_back(row);
    }
    std::vector<std::size_t> pick;
    std::size_t next_featured = 0, next_table = featured.size();
    for (EntityId e : unique) pick.push_back(e < options.node_table_base ? next_featured++ : next_table++);
    std::vector<Tensor> parts;
    if (!featured.empty()) parts.push_back(multimodal_table(model, features, featured));
    if (!table_rows.empty()) parts.push_back(gather_rows(*options.node_table, table_rows));
    fused = gather_rows(concat_rows(std::span<const Tensor>(parts)), pick);
  }
  const Tensor& relations = p["rel.emb"];
  const DropoutContext drop{cfg.dropout, options.dropout_rng};

  BatchEncoding out;
  Tensor h = gather_rows(fused, node_unique);
  out.layers.push_back(gather_rows(h, center_rows));
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const Activation act = l + 1 == cfg.layers ? cfg.final_activation : cfg.activation;
    h = gat_layer(edges, h, relations, l, act, p, drop).h;
    out.layers.push_back(gather_rows(h, center_rows));
  }
  out.structural = jumping_knowledge(out.layers, p);

  std::vector<std::size_t> center_unique;
  for (EntityId c : centers) center_unique.push_back(unique_of.at(c));
  out.multimodal = gather_rows(fused, center_unique);
  out.z = aggregate_modalities(out.multimodal, out.structural, cfg.fusion, p,
                               options.personal_logits);
  return out;
}

EntityEncoding encode_entity(const EncoderModel& model, const KnowledgeGraph& graph,
                             const FeatureStore& features, EntityId entity, std::uint64_t seed) {
  NoGradGuard no_grad;
  const EntityId centers[] = {entity};
  const auto enc = encode_batch(model, graph, features, centers, {.subgraph_seed = seed});
  EntityEncoding out;
  out.multimodal = enc.multimodal.row_values(0);
  for (const auto& l : enc.layers) out.layers.push_back(l.row_values(0));
  out.z = enc.z.row_values(0);
  return out;
}

std::vector<std::vector<double>> embed_all(const EncoderModel& model, const KnowledgeGraph& graph,
                                           const FeatureStore& features,
                                           std::span<const EntityId> entities,
                                           std::uint64_t seed, std::size_t batch) {
  NoGradGuard no_grad;
  std::vector<std::vector<double>> out;
  out.reserve(entities.size());
  for (std::size_t start = 0; start < entities.size(); start += batch) {
    const auto chunk = entities.subspan(start, std::min(batch, entities.size() - start));
    const auto enc = encode_batch(model, graph, features, chunk, {.subgraph_seed = seed});
    for (std::size_t i = 0; i < chunk.size(); ++i) out.push_back(enc.z.row_values(i));
  }
  return out;
}

}  // namespace kgfuse
