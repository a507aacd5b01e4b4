#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "kgfuse/features.hpp"
#include "kgfuse/graph.hpp"
#include "kgfuse/records.hpp"

namespace kgfuse {

struct SyntheticSpec {
  std::size_t entities = 200;
  std::size_t latent_dim = 16;
  double noise = 0.1;
  std::uint64_t seed = 7;
  std::size_t text_dim = 32;
  std::size_t image_dim = 32;
  std::size_t attribute_slots = 12;
  std::size_t max_attributes = 4;
  double mean_degree = 8.0;
  std::size_t relation_buckets = 4;
  double edge_keep = 0.9;
  std::size_t users = 50;
  double interaction_density = 0.5;
};

// Two graphs over the same planted entities. Entity i of graph A and entity
// b_of_a[i] of graph B share latents[i]; every feature vector is a fixed
// linear map of that latent (one map per modality; attribute slots share the
// text map) plus independent Gaussian noise. Edges join entities whose latent cosine is in
// the top mean_degree/2 * entities pairs; the relation id is the similarity
// bucket. Each graph keeps each edge independently with edge_keep.
// Users rate items of graph A: y = 1 exactly when user_latent . latent > 0.
struct SyntheticDataset {
  KnowledgeGraph graph_a;
  KnowledgeGraph graph_b;
  FeatureStore features_a;
  FeatureStore features_b;
  AlignmentSet alignments;
  std::vector<RawRating> ratings;
  InteractionSet interactions;

  // Planted ground truth.
  std::vector<std::vector<double>> latents;       // by graph-A id
  std::vector<std::vector<double>> user_latents;  // by user id
  std::vector<EntityId> b_of_a;
  std::vector<std::vector<double>> image_map;                // image_dim x latent_dim
  std::vector<std::vector<double>> text_map;                 // text_dim x latent_dim
  double edge_threshold = 0.0;
};

SyntheticDataset gen_synthetic(const SyntheticSpec& spec);

// Writes graph_a/, graph_b/, alignments{,_train,_test}.tsv and
// interactions{,_train,_test}.tsv (raw ratings) under `dir`. Splits hold out
// 10% with a seed derived from `split_seed`.
void write_synthetic(const std::filesystem::path& dir, const SyntheticDataset& data,
                     std::uint64_t split_seed);

}  // namespace kgfuse
