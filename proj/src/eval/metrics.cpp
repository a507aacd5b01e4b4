#include "kgfuse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kgfuse/error.hpp"
#include "kgfuse/log.hpp"

namespace kgfuse {

namespace {

double norm(std::span<const double> v) {
  return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
}

std::string metric_name(const char* prefix, std::size_t k) {
  return std::string(prefix) + "@" + std::to_string(k);
}

std::vector<std::vector<double>> unit_rows(std::span<const std::vector<double>> rows) {
  std::vector<std::vector<double>> out(rows.begin(), rows.end());
  for (auto& r : out) {
    const double n = norm(r);
    if (n > 0)
      for (double& x : r) x /= n;
  }
  return out;
}

}  // namespace

double cosine_sim(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw ContractError("cosine_sim of vectors with dims " + std::to_string(u.size()) + " and " +
                        std::to_string(v.size()));
  }
  const double nu = norm(u), nv = norm(v);
  if (nu == 0.0 || nv == 0.0) {
    log_warning("cosine similarity with a zero vector; using 0");
    return 0.0;
  }
  const double c = std::inner_product(u.begin(), u.end(), v.begin(), 0.0) / (nu * nv);
  return std::clamp(c, -1.0, 1.0);
}

void MetricReport::set(const std::string& name, std::optional<double> value) {
  for (auto& [n, v] : metrics) {
    if (n == name) {
      v = value;
      return;
    }
  }
  metrics.emplace_back(name, value);
}

std::optional<double> MetricReport::get(const std::string& name) const {
  for (const auto& [n, v] : metrics)
    if (n == name) return v;
  return std::nullopt;
}

nlohmann::ordered_json MetricReport::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [name, value] : metrics) {
    if (value) j[name] = *value;
    else j[name] = nullptr;
  }
  for (const auto& [name, count] : counts) j[name] = count;
  j["ks"] = ks;
  return j;
}

std::size_t alignment_rank(std::span<const double> sims, std::size_t target) {
  const double s = sims[target];
  std::size_t rank = 1;
  for (std::size_t j = 0; j < sims.size(); ++j) {
    if (sims[j] > s || (sims[j] == s && j < target)) ++rank;
  }
  return rank;
}

MetricReport eval_alignment(std::span<const std::vector<double>> emb_a,
                            std::span<const std::vector<double>> emb_b,
                            std::span<const AlignedPair> pairs, std::span<const std::size_t> ks) {
  if (emb_b.empty()) throw ContractError("no graph-B candidates to rank");
  const std::size_t dim = emb_b[0].size();
  for (std::size_t j = 0; j < emb_b.size(); ++j) {
    if (emb_b[j].size() != dim || dim == 0) {
      throw ContractError("missing embedding for graph-B entity " + std::to_string(j));
    }
  }
  for (const auto& p : pairs) {
    if (p.a >= emb_a.size() || emb_a[p.a].size() != dim) {
      throw ContractError("missing embedding for graph-A entity " + std::to_string(p.a));
    }
    if (p.b >= emb_b.size()) {
      throw ContractError("missing embedding for graph-B entity " + std::to_string(p.b));
    }
  }

  const auto unit_b = unit_rows(emb_b);
  std::vector<std::size_t> hits(ks.size(), 0);
  double rr = 0.0;
  std::vector<double> sims(emb_b.size());
  for (const auto& p : pairs) {
    const auto a = unit_rows(std::span(&emb_a[p.a], 1))[0];
    for (std::size_t j = 0; j < unit_b.size(); ++j) {
      sims[j] = std::inner_product(a.begin(), a.end(), unit_b[j].begin(), 0.0);
    }
    const std::size_t rank = alignment_rank(sims, p.b);
    rr += 1.0 / static_cast<double>(rank);
    for (std::size_t k = 0; k < ks.size(); ++k) hits[k] += rank <= ks[k];
  }

  MetricReport r;
  const double n = static_cast<double>(pairs.size());
  for (std::size_t k = 0; k < ks.size(); ++k) {
    r.set(metric_name("Hits", ks[k]),
          pairs.empty() ? std::nullopt : std::optional(static_cast<double>(hits[k]) / n));
  }
  r.set("MRR", pairs.empty() ? std::nullopt : std::optional(rr / n));
  r.counts["pairs"] = pairs.size();
  r.counts["candidates"] = emb_b.size();
  r.ks.assign(ks.begin(), ks.end());
  return r;
}

std::optional<double> auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DimensionError("scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::ranges::sort(order, [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos = 0, neg = 0, rank_sum = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) {
        rank_sum += avg_rank;
        ++pos;
      } else {
        ++neg;
      }
    }
    i = j;
  }
  if (pos == 0 || neg == 0) return std::nullopt;
  return (rank_sum - pos * (pos + 1) / 2) / (pos * neg);
}

MetricReport eval_recommendation(std::span<const ScoredInteraction> rows,
                                 std::span<const std::size_t> ks) {
  std::vector<double> scores;
  std::vector<int> labels;
  std::map<UserId, std::vector<const ScoredInteraction*>> by_user;
  for (const auto& r : rows) {
    scores.push_back(r.score);
    labels.push_back(r.label);
    by_user[r.user].push_back(&r);
  }

  MetricReport report;
  report.set("AUC", auc(scores, labels));

  std::vector<double> recall(ks.size(), 0.0), ndcg(ks.size(), 0.0);
  std::size_t users = 0;
  for (auto& [user, list] : by_user) {
    const auto positives = std::ranges::count_if(list, [](auto* r) { return r->label == 1; });
    if (positives == 0) continue;
    ++users;
    std::ranges::sort(list, [](auto* a, auto* b) {
      return a->score != b->score ? a->score > b->score : a->item < b->item;
    });
    for (std::size_t k = 0; k < ks.size(); ++k) {
      double hit = 0, dcg = 0, idcg = 0;
      for (std::size_t i = 0; i < std::min(ks[k], list.size()); ++i) {
        if (list[i]->label == 1) {
          hit += 1;
          dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
        }
      }
      const auto ideal = std::min<std::size_t>(ks[k], static_cast<std::size_t>(positives));
      for (std::size_t i = 0; i < ideal; ++i) idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
      recall[k] += hit / static_cast<double>(positives);
      ndcg[k] += dcg / idcg;
    }
  }
  for (std::size_t k = 0; k < ks.size(); ++k) {
    const auto value = [&](double total) {
      return users ? std::optional(total / static_cast<double>(users)) : std::nullopt;
    };
    report.set(metric_name("Recall", ks[k]), value(recall[k]));
    report.set(metric_name("NDCG", ks[k]), value(ndcg[k]));
  }
  report.counts["interactions"] = rows.size();
  report.counts["users"] = users;
  report.ks.assign(ks.begin(), ks.end());
  return report;
}

EarlyStop early_stop_check(std::span<const double> history, std::size_t patience) {
  if (patience < 1) throw ConfigError("patience must be >= 1");
  EarlyStop out;
  if (history.empty()) return out;
  for (std::size_t i = 1; i < history.size(); ++i) {
    if (history[i] > history[out.best_epoch]) out.best_epoch = i;
  }
  out.stop = history.size() - 1 - out.best_epoch >= patience;
  return out;
}

}  // namespace kgfuse
