#include <cmath>
#include <string>
#include <vector>

#include "kgfuse/encoder.hpp"
#include "kgfuse/error.hpp"

namespace kgfuse {

namespace {

// d x heads matrix with a one where dimension k belongs to head h.
Tensor head_indicator(std::size_t dim, std::size_t heads) {
  const std::size_t dh = dim / heads;
  std::vector<double> v(dim * heads, 0.0);
  for (std::size_t k = 0; k < dim; ++k) v[k * heads + k / dh] = 1.0;
  return Tensor::from({dim, heads}, std::move(v));
}

// Column with 1/count(segment) per segment.
Tensor inverse_counts(std::span<const std::size_t> owner, std::size_t num_segments) {
  std::vector<double> count(num_segments, 0.0);
  for (auto o : owner) count.at(o) += 1.0;
  for (std::size_t s = 0; s < num_segments; ++s) {
    if (count[s] == 0.0) {
      throw ContractError("entity " + std::to_string(s) + " has no tokens for cross attention");
    }
    count[s] = 1.0 / count[s];
  }
  return Tensor::column(std::move(count));
}

struct Direction {
  Tensor out;
  Tensor weights;
};

// Queries from `q_tokens` attend over the same entity's `kv_tokens`.
Direction attend(const Tensor& q_tokens, std::span<const std::size_t> q_owner,
                 const Tensor& kv_tokens, std::span<const std::size_t> kv_owner,
                 std::size_t num_entities, std::size_t heads, const std::string& prefix,
                 const ParameterSet& params) {
  const std::size_t d = params[prefix + ".wq"].cols();
  const Tensor q = matmul(q_tokens, params[prefix + ".wq"]);
  const Tensor k = matmul(kv_tokens, params[prefix + ".wk"]);
  const Tensor v = matmul(kv_tokens, params[prefix + ".wv"]);

  std::vector<std::vector<std::size_t>> keys_of(num_entities);
  for (std::size_t j = 0; j < kv_owner.size(); ++j) keys_of.at(kv_owner[j]).push_back(j);
  std::vector<std::size_t> pair_q, pair_k;
  for (std::size_t i = 0; i < q_owner.size(); ++i) {
    for (auto j : keys_of.at(q_owner[i])) {
      pair_q.push_back(i);
      pair_k.push_back(j);
    }
  }

  const Tensor ind = head_indicator(d, heads);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d / heads));
  const Tensor scores =
      scale(matmul(mul(gather_rows(q, pair_q), gather_rows(k, pair_k)), ind), inv_sqrt);
  const Tensor alpha = segment_softmax(scores, pair_q, q_owner.size());
  const Tensor weighted = mul(gather_rows(v, pair_k), matmul(alpha, transpose(ind)));
  const Tensor per_token = segment_sum(weighted, pair_q, q_owner.size());
  const Tensor per_entity =
      mul(segment_sum(per_token, q_owner, num_entities), inverse_counts(q_owner, num_entities));
  return {per_entity, alpha};
}

}  // namespace

Pooled aggregate_attributes(const Tensor& attrs, std::span<const std::size_t> owner,
                            std::size_t num_entities, const ParameterSet& params) {
  const Tensor& query = params["attr.query"];
  if (attrs.cols() != query.rows()) {
    throw SchemaError("attribute vectors have dim " + std::to_string(attrs.cols()) +
                      " but the model expects " + std::to_string(query.rows()));
  }
  if (owner.size() != attrs.rows()) throw DimensionError("attribute owner list size mismatch");
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(query.rows()));
  const Tensor weights = segment_softmax(scale(matmul(attrs, query), inv_sqrt), owner, num_entities);
  const Tensor pooled = segment_sum(mul(attrs, weights), owner, num_entities);
  return {add(matmul(pooled, params["attr.proj.w"]), params["attr.proj.b"]), weights};
}

Pooled aggregate_attributes(const Tensor& attrs, const ParameterSet& params) {
  if (attrs.rows() == 0) throw ContractError("attribute list is empty");
  const std::vector<std::size_t> owner(attrs.rows(), 0);
  return aggregate_attributes(attrs, owner, 1, params);
}

Fused cross_modal_fuse(const Tensor& text_tokens, std::span<const std::size_t> text_owner,
                       const Tensor& image_tokens, std::span<const std::size_t> image_owner,
                       std::size_t num_entities, std::size_t heads, const ParameterSet& params) {
  const std::size_t d = params["fuse.out.w"].rows();
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("model dim " + std::to_string(d) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
  if (text_tokens.cols() != d || image_tokens.cols() != d) {
    throw DimensionError("cross attention tokens must have the model dim");
  }
  auto t2i = attend(text_tokens, text_owner, image_tokens, image_owner, num_entities, heads,
                    "fuse.t2i", params);
  auto i2t = attend(image_tokens, image_owner, text_tokens, text_owner, num_entities, heads,
                    "fuse.i2t", params);
  const Tensor both = scale(add(t2i.out, i2t.out), 0.5);
  return {add(matmul(both, params["fuse.out.w"]), params["fuse.out.b"]), t2i.weights,
          i2t.weights};
}

Fused cross_modal_fuse(const Tensor& text, const Tensor& image, std::size_t heads,
                       const ParameterSet& params) {
  if (text.rows() != image.rows()) throw DimensionError("text and image rows differ");
  std::vector<std::size_t> owner(text.rows());
  for (std::size_t i = 0; i < owner.size(); ++i) owner[i] = i;
  return cross_modal_fuse(text, owner, image, owner, text.rows(), heads, params);
}

GatOutput gat_layer(const EdgeList& edges, const Tensor& h, const Tensor& relations,
                    std::size_t layer, Activation act, const ParameterSet& params,
                    const DropoutContext& dropout) {
  const std::string p = "gat." + std::to_string(layer);
  const Tensor& a = params[p + ".a"];
  const std::size_t d = h.cols();
  if (h.rows() != edges.num_nodes) throw DimensionError("node state rows != num_nodes");
  std::vector<bool> has_edge(edges.num_nodes, false);
  for (auto i : edges.dst) has_edge.at(i) = true;
  for (std::size_t i = 0; i < edges.num_nodes; ++i) {
    if (!has_edge[i]) throw ContractError("node " + std::to_string(i) + " has no incident edge");
  }

  const Tensor wh = matmul(h, params[p + ".wh"]);
  const Tensor wr = matmul(relations, params[p + ".wr"]);
  // a . [x ; y ; z] splits into three dot products, one per block of a.
  const Tensor s_dst = matmul(wh, slice_rows(a, 0, d));
  const Tensor s_rel = matmul(wr, slice_rows(a, d, 2 * d));
  const Tensor s_src = matmul(wh, slice_rows(a, 2 * d, 3 * d));
  const Tensor e = add(add(gather_rows(s_dst, edges.dst), gather_rows(s_rel, edges.relation_row)),
                       gather_rows(s_src, edges.src));
  const Tensor alpha = segment_softmax(e, edges.dst, edges.num_nodes);

  Tensor used = alpha;
  if (dropout.rng && dropout.rate > 0) used = kgfuse::dropout(alpha, dropout.rate, *dropout.rng);
  const Tensor agg = segment_sum(mul(gather_rows(wh, edges.src), used), edges.dst, edges.num_nodes);
  Tensor update = apply_activation(act, agg);
  if (dropout.rng && dropout.rate > 0) update = kgfuse::dropout(update, dropout.rate, *dropout.rng);
  return {add(update, h), alpha};
}

Tensor jumping_knowledge(std::span<const Tensor> layers, const ParameterSet& params) {
  if (layers.empty()) throw ContractError("jumping knowledge needs at least one layer");
  Tensor m = layers[0];
  for (std::size_t i = 1; i < layers.size(); ++i) m = maximum(m, layers[i]);
  return add(matmul(m, params["jk.w"]), params["jk.b"]);
}

Tensor personalized_fusion_logits(const Tensor& profiles, const std::string& prefix,
                                  const ParameterSet& params) {
  return add(matmul(profiles, params[prefix + ".w"]), params[prefix + ".b"]);
}

Tensor personalized_fusion_weights(const Tensor& profiles, const std::string& prefix,
                                   const ParameterSet& params) {
  return softmax_rows(personalized_fusion_logits(profiles, prefix, params));
}

Tensor aggregate_modalities(const Tensor& multimodal, const Tensor& structural,
                            FusionStrategy strategy, const ParameterSet& params,
                            const Tensor* personal_logits) {
  if (multimodal.shape() != structural.shape()) {
    throw DimensionError("modality inputs differ: " + shape_string(multimodal.shape()) + " vs " +
                         shape_string(structural.shape()));
  }
  switch (strategy) {
    case FusionStrategy::kGated: {
      const Tensor g = sigmoid(add(matmul(concat_cols({multimodal, structural}),
                                          params["agg.gate.w"]),
                                   params["agg.gate.b"]));
      return add(mul(g, multimodal), mul(add_scalar(scale(g, -1.0), 1.0), structural));
    }
    case FusionStrategy::kConcatProject:
      return add(matmul(concat_cols({multimodal, structural}), params["agg.concat.w"]),
                 params["agg.concat.b"]);
    case FusionStrategy::kAttentionPool: {
      const Tensor& q = params["agg.pool.query"];
      Tensor logits = concat_cols({matmul(multimodal, q), matmul(structural, q)});
      if (personal_logits) logits = add(logits, *personal_logits);
      const Tensor w = softmax_rows(logits);
      return add(mul(multimodal, slice_cols(w, 0, 1)), mul(structural, slice_cols(w, 1, 2)));
    }
  }
  throw ConfigError("unknown fusion strategy");
}

}  // namespace kgfuse
