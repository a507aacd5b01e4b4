#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "kgfuse/graph.hpp"
#include "kgfuse/records.hpp"

namespace kgfuse {

// Cosine similarity. A zero vector has similarity 0 with everything; that
// case logs a warning.
double cosine_sim(std::span<const double> u, std::span<const double> v);

// Named metrics in insertion order. A metric without a value (for example
// AUC over single-class labels) is reported as null.
struct MetricReport {
  std::vector<std::pair<std::string, std::optional<double>>> metrics;
  std::map<std::string, std::size_t> counts;
  std::vector<std::size_t> ks;

  void set(const std::string& name, std::optional<double> value);
  std::optional<double> get(const std::string& name) const;
  nlohmann::ordered_json to_json() const;
};

// Ranks every graph-B embedding against each test pair's A embedding by
// cosine similarity (ties to the smaller B id). emb_a and emb_b are indexed
// by entity id. Reports Hits@K for each K and MRR.
MetricReport eval_alignment(std::span<const std::vector<double>> emb_a,
                            std::span<const std::vector<double>> emb_b,
                            std::span<const AlignedPair> pairs, std::span<const std::size_t> ks);

// 1-based rank of `target` among candidates under the alignment tie rule.
std::size_t alignment_rank(std::span<const double> sims, std::size_t target);

struct ScoredInteraction {
  UserId user = 0;
  EntityId item = 0;
  double score = 0.0;
  int label = 0;
};

// Rank-statistic AUC with ties counted one half; nullopt when labels are
// single-class.
std::optional<double> auc(std::span<const double> scores, std::span<const int> labels);

// AUC over all rows plus per-user Recall@K and NDCG@K, averaged over users
// with at least one positive. Each user's list is ranked by score with ties
// to the smaller item id.
MetricReport eval_recommendation(std::span<const ScoredInteraction> rows,
                                 std::span<const std::size_t> ks);

struct EarlyStop {
  bool stop = false;
  std::size_t best_epoch = 0;
};

// Stops once `patience` epochs have passed without a strict improvement on
// the best value. best_epoch is the first epoch reaching the maximum.
EarlyStop early_stop_check(std::span<const double> history, std::size_t patience);

}  // namespace kgfuse
