#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kgfuse/features.hpp"
#include "kgfuse/graph.hpp"
#include "kgfuse/parameters.hpp"
#include "kgfuse/rng.hpp"
#include "kgfuse/tensor.hpp"

namespace kgfuse {

enum class FusionStrategy { kConcatProject, kAttentionPool, kGated };

FusionStrategy parse_fusion(std::string_view name);
std::string_view fusion_name(FusionStrategy s);

struct EncoderConfig {
  std::size_t dim = 64;
  std::size_t heads = 4;
  std::size_t layers = 3;
  double dropout = 0.1;
  FusionStrategy fusion = FusionStrategy::kGated;
  Activation activation = Activation::kLeakyRelu;        // hidden GAT layers
  Activation final_activation = Activation::kIdentity;  // last GAT layer
  std::size_t hops = 2;
  std::size_t fanout = 16;

  // ConfigError unless dim % heads == 0, layers >= 1, dropout in [0, 1),
  // hops >= 1 and fanout >= 1.
  void validate() const;
  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

// Parameters plus the shapes they were built for.
//
// Relation embeddings have one row per data relation id below
// num_relations, then a row for SELF and one for INTERACT.
struct EncoderModel {
  EncoderConfig config;
  std::size_t text_dim = 0;   // 0: every entity is cold for text
  std::size_t image_dim = 0;  // 0: every entity is cold for image
  std::size_t num_relations = 0;
  ParameterSet params;

  // Row of rel.emb for a relation id; ValidationError for ids the table lacks.
  std::size_t relation_row(RelationId r) const;
};

EncoderModel make_encoder(const EncoderConfig& config, std::size_t text_dim,
                          std::size_t image_dim, std::size_t num_relations, Rng& rng);

// ---- stages --------------------------------------------------------------

struct Pooled {
  Tensor out;      // one row per segment
  Tensor weights;  // one attention weight per input row
};

// Self-attention pooling of attribute vectors: weights are a softmax of
// x . q / sqrt(d_t) within each entity's rows, the pooled vector is projected
// to the model dim. `owner[r]` is the output row of input row r.
Pooled aggregate_attributes(const Tensor& attrs, std::span<const std::size_t> owner,
                            std::size_t num_entities, const ParameterSet& params);
// Single-entity form.
Pooled aggregate_attributes(const Tensor& attrs, const ParameterSet& params);

struct Fused {
  Tensor out;              // num_entities x d
  Tensor text_to_image;    // attention weights, one row per (text token, image token) pair
  Tensor image_to_text;    // same for the reverse direction; columns are heads
};

// Bidirectional multi-head cross attention. Text tokens query the same
// entity's image tokens and vice versa; each direction's per-token outputs
// are averaged per entity, the two directions averaged, then projected.
Fused cross_modal_fuse(const Tensor& text_tokens, std::span<const std::size_t> text_owner,
                       const Tensor& image_tokens, std::span<const std::size_t> image_owner,
                       std::size_t num_entities, std::size_t heads, const ParameterSet& params);
// One token per modality per entity (rows aligned).
Fused cross_modal_fuse(const Tensor& text, const Tensor& image, std::size_t heads,
                       const ParameterSet& params);

// Edge list over a node set: messages flow src -> dst. relation_row indexes
// the relation embedding table.
struct EdgeList {
  std::vector<std::size_t> dst;
  std::vector<std::size_t> src;
  std::vector<std::size_t> relation_row;
  std::size_t num_nodes = 0;
};

struct GatOutput {
  Tensor h;      // num_nodes x d
  Tensor alpha;  // one weight per edge, softmax over each dst's incoming edges
};

struct DropoutContext {
  double rate = 0.0;
  Rng* rng = nullptr;  // nullptr disables dropout
};

// e_ij = a . [W_h h_i ; W_r r_ij ; W_h h_j], alpha = softmax over j in N(i),
// h_i' = act(sum_j alpha_ij W_h h_j) + h_i. Layer parameters are gat.<layer>.*.
GatOutput gat_layer(const EdgeList& edges, const Tensor& h, const Tensor& relations,
                    std::size_t layer, Activation act, const ParameterSet& params,
                    const DropoutContext& dropout = {});

// Elementwise max over layer outputs, then projection.
Tensor jumping_knowledge(std::span<const Tensor> layers, const ParameterSet& params);

// Softmax over the two modality inputs (multimodal, structural) from a
// profile vector. `prefix` selects fusion.user or fusion.item parameters.
Tensor personalized_fusion_logits(const Tensor& profiles, const std::string& prefix,
                                  const ParameterSet& params);
Tensor personalized_fusion_weights(const Tensor& profiles, const std::string& prefix,
                                   const ParameterSet& params);

// Combines multimodal and structural vectors. With attention_pool the
// content weights are multiplied by the optional personalized weights
// (passed as logits) and renormalized.
Tensor aggregate_modalities(const Tensor& multimodal, const Tensor& structural,
                            FusionStrategy strategy, const ParameterSet& params,
                            const Tensor* personal_logits = nullptr);

// ---- full encoder --------------------------------------------------------

struct EncodeOptions {
  // Subgraph for entity e is sampled with seed mix(subgraph_seed, e), so an
  // entity's encoding does not depend on what else is in the batch.
  std::uint64_t subgraph_seed = 0;
  Rng* dropout_rng = nullptr;  // set during training only
  // Rows of per-center personalized fusion logits (attention_pool only).
  const Tensor* personal_logits = nullptr;
  // Entities at or above node_table_base start from row (e - base) of
  // node_table instead of their features.
  const Tensor* node_table = nullptr;
  EntityId node_table_base = 0;
};

struct BatchEncoding {
  Tensor z;                   // centers x d
  Tensor multimodal;          // centers x d, fused H_i of each center
  Tensor structural;          // centers x d, after jumping knowledge
  std::vector<Tensor> layers; // h^0..h^L at the center rows
};

BatchEncoding encode_batch(const EncoderModel& model, const KnowledgeGraph& graph,
                           const FeatureStore& features, std::span<const EntityId> centers,
                           const EncodeOptions& options);

struct EntityEncoding {
  std::vector<double> multimodal;
  std::vector<std::vector<double>> layers;
  std::vector<double> z;
};

EntityEncoding encode_entity(const EncoderModel& model, const KnowledgeGraph& graph,
                             const FeatureStore& features, EntityId entity, std::uint64_t seed);

// Encodes every listed entity without dropout and without recording a tape.
std::vector<std::vector<double>> embed_all(const EncoderModel& model, const KnowledgeGraph& graph,
                                           const FeatureStore& features,
                                           std::span<const EntityId> entities,
                                           std::uint64_t seed, std::size_t batch = 256);

}  // namespace kgfuse
