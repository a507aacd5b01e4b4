#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "kgfuse/encoder.hpp"
#include "kgfuse/metrics.hpp"
#include "kgfuse/records.hpp"

namespace kgfuse {

enum class RecLossKind { kBce, kBpr };

RecLossKind parse_rec_loss(std::string_view name);
std::string_view rec_loss_name(RecLossKind kind);

struct TrainConfig {
  double lr = 1e-3;
  double tau = 0.1;
  double lambda = 0.0;
  std::size_t epochs_pretrain = 100;
  std::size_t epochs_finetune = 100;
  std::size_t batch = 256;
  std::size_t k_neg = 64;
  std::size_t bank = 4096;
  std::size_t patience = 10;
  std::size_t k_attr = 10;
  std::size_t path_len = 3;
  std::size_t max_paths = 8;
  std::size_t neg_ratio = 1;  // sampled non-interactions per training positive
  RecLossKind rec_loss = RecLossKind::kBce;
  bool freeze_encoders = false;
  std::uint64_t seed = 42;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct TrainReport {
  std::vector<double> losses;      // mean training loss per epoch
  std::vector<double> validation;  // validation metric per epoch
  std::string metric;              // name of the validation metric
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  std::size_t steps = 0;
  double wall_seconds = 0.0;
};

// ---- losses --------------------------------------------------------------

// sims is batch x (1 + K) with the positive similarity in column 0. Returns
// the batch mean of -log softmax(sims / tau)[0].
Tensor info_nce_from_similarities(const Tensor& sims, double tau);

// Cosine-similarity InfoNCE. negatives holds `per_anchor` rows per anchor,
// grouped by anchor.
Tensor info_nce_loss(const Tensor& anchors, const Tensor& positives, const Tensor& negatives,
                     std::size_t per_anchor, double tau);

double score_pair(std::span<const double> h_u, std::span<const double> h_v);

// Mean binary cross-entropy of sigmoid(scores) against labels, via log-sigmoid.
Tensor bce_loss(const Tensor& scores, std::span<const int> labels);
// -mean log sigmoid(pos - neg).
Tensor bpr_loss(const Tensor& pos, const Tensor& neg);

// ---- paths ---------------------------------------------------------------

// Relation sequences of up to `max_paths` shortest paths from `from` to
// `to` with at most `max_len` edges, in neighbour-id order. SELF loops are
// never used. With skip_direct, edges joining from and to are ignored.
std::vector<std::vector<RelationId>> shortest_paths(const KnowledgeGraph& graph, EntityId from,
                                                    EntityId to, std::size_t max_len,
                                                    std::size_t max_paths, bool skip_direct);

// Mean over paths of the mean relation embedding along each path, as
// (relation, weight) terms. Empty when there is no path.
std::vector<std::pair<RelationId, double>> path_weights(
    const std::vector<std::vector<RelationId>>& paths);

// Path feature vector from a relation embedding table; zeros without a path.
std::vector<double> path_features(const KnowledgeGraph& graph, EntityId from, EntityId to,
                                  const EncoderModel& model, std::size_t max_len,
                                  std::size_t max_paths, bool skip_direct = false);

// ---- recommendation ------------------------------------------------------

struct UserItem {
  UserId user = 0;
  EntityId item = 0;
  friend auto operator<=>(const UserItem&, const UserItem&) = default;
};

// The item graph with one extra node per user, linked to the user's known
// positive items by INTERACT edges. Holds references to the item graph and
// features.
class RecContext {
 public:
  RecContext(const KnowledgeGraph& items, const FeatureStore& features, std::size_t num_users,
             std::vector<UserItem> links, std::size_t path_len, std::size_t max_paths);

  const KnowledgeGraph& graph() const { return graph_; }
  const FeatureStore& features() const { return *features_; }
  std::size_t num_items() const { return num_items_; }
  std::size_t num_users() const { return num_users_; }
  const std::vector<UserItem>& links() const { return links_; }
  EntityId user_node(UserId u) const;
  void check_pair(UserItem p) const;

  // Cached path terms for a pair; the direct user-item edge is ignored.
  const std::vector<std::pair<RelationId, double>>& paths(UserItem p) const;

  // Same context minus the given links, so a training pair is not encoded
  // through its own edge.
  RecContext without(std::span<const UserItem> hidden) const;

 private:
  const KnowledgeGraph* items_;
  KnowledgeGraph graph_;
  const FeatureStore* features_;
  std::size_t num_items_;
  std::size_t num_users_;
  std::vector<UserItem> links_;
  std::size_t path_len_;
  std::size_t max_paths_;
  mutable std::unordered_map<std::uint64_t, std::vector<std::pair<RelationId, double>>> cache_;
};

// rec.v_interact (ones), rec.v_path (zeros), rec.path.w, rec.user.emb (the
// initial state of user nodes, which carry no features), and with
// attention_pool fusion the profile and fusion.user/item tables. Existing
// entries are kept.
void add_recommendation_params(EncoderModel& model, std::size_t num_users,
                               std::size_t num_items, Rng& rng);

// Logits v . [h_u * h_v ; W_path path_uv] for each pair.
Tensor rec_logits(const EncoderModel& model, const RecContext& ctx,
                  std::span<const UserItem> pairs, std::uint64_t subgraph_seed,
                  Rng* dropout_rng = nullptr);

// Probabilities without dropout or tape; encodings use `seed`.
std::vector<double> predict(const EncoderModel& model, const RecContext& ctx,
                            std::span<const UserItem> pairs, std::uint64_t seed);

// ---- training loops ------------------------------------------------------

struct GraphView {
  const KnowledgeGraph& graph;
  const FeatureStore& features;
};

// Fresh encoder sized for the given graphs. Feature dims must agree.
EncoderModel init_encoder(const EncoderConfig& config, std::span<const GraphView> graphs,
                          std::uint64_t seed);

struct PretrainResult {
  EncoderModel model;
  TrainReport report;
  Rng rng;
};

// Contrastive alignment pretraining. The alignment pairs are split 90/10
// into training and validation; early stopping tracks validation Hits@1
// (MRR breaks ties, later epochs win exact ties) and the best parameters are
// returned. `init` (optional) replaces the fresh
// encoder.
PretrainResult pretrain(const GraphView& a, const GraphView& b, const AlignmentSet& alignments,
                        const EncoderConfig& encoder, const TrainConfig& config,
                        const EncoderModel* init = nullptr);

struct FinetuneResult {
  EncoderModel model;
  std::size_t num_users = 0;
  std::vector<UserItem> links;  // user-item edges used by the model
  TrainReport report;
  Rng rng;
};

// Recommendation fine-tuning from `init`. Interactions are split 90/10 into
// training and validation; each epoch adds neg_ratio sampled
// non-interactions per training positive (bce) or pairs each positive with
// max(1, neg_ratio) sampled items (bpr). Each step encodes on the graph
// without the batch's positive links. Early stopping tracks validation AUC.
FinetuneResult finetune(const EncoderModel& init, const GraphView& items,
                        const InteractionSet& interactions, const TrainConfig& config);

}  // namespace kgfuse
