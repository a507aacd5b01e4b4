#include <algorithm>
#include <chrono>
#include <limits>
#include <optional>
#include <set>
#include <string_view>

#include "common.hpp"
#include "kgfuse/error.hpp"
#include "kgfuse/log.hpp"
#include "kgfuse/training.hpp"

namespace kgfuse {

namespace {

bool is_head(const std::string& name) {
  for (std::string_view prefix : {"rec.", "profile.", "fusion."}) {
    if (name.starts_with(prefix)) return true;
  }
  return false;
}

// Uniform item outside `taken`; nullopt when the user has seen every item.
std::optional<EntityId> sample_item(const std::set<EntityId>& taken, std::size_t num_items,
                                    Rng& rng) {
  if (taken.size() >= num_items) return std::nullopt;
  while (true) {
    const auto item = static_cast<EntityId>(rng.below(num_items));
    if (!taken.contains(item)) return item;
  }
}

double validation_auc(const EncoderModel& model, const RecContext& ctx,
                      const std::vector<Interaction>& val, std::uint64_t seed) {
  std::vector<UserItem> pairs;
  std::vector<int> labels;
  for (const auto& r : val) {
    pairs.push_back({r.user, r.item});
    labels.push_back(r.label);
  }
  const auto scores = predict(model, ctx, pairs, seed);
  const auto value = auc(scores, labels);
  if (!value) {
    log_warning("validation AUC undefined (single-class labels); using 0.5");
    return 0.5;
  }
  return *value;
}

}  // namespace

FinetuneResult finetune(const EncoderModel& init, const GraphView& items,
                        const InteractionSet& interactions, const TrainConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  config.validate();
  interactions.validate();
  if (interactions.positives() == 0) throw ValidationError("no positive interactions");
  if (config.rec_loss == RecLossKind::kBce && config.neg_ratio == 0 &&
      interactions.positives() == interactions.records.size()) {
    throw ValidationError("bce needs negatives: no negative records and neg_ratio = 0");
  }

  const std::size_t num_items = items.graph.num_entities();
  const std::size_t num_users = interactions.num_users();
  const auto& all = interactions.records;

  std::vector<Interaction> train, val;
  if (all.size() >= 2) {
    const auto [ti, vi] = split_indices(all.size(), 0.1, Rng::mix(config.seed, 3));
    for (auto i : ti) train.push_back(all[i]);
    for (auto i : vi) val.push_back(all[i]);
  } else {
    train = all;
  }

  // Every item a user has a record for, and their positives, across both splits.
  std::vector<std::set<EntityId>> seen(num_users), liked(num_users);
  for (const auto& r : all) {
    seen[r.user].insert(r.item);
    if (r.label == 1) liked[r.user].insert(r.item);
  }
  std::vector<UserItem> links;
  std::vector<UserItem> train_pos;
  for (const auto& r : train) {
    if (r.label == 1) {
      links.push_back({r.user, r.item});
      train_pos.push_back({r.user, r.item});
    }
  }

  FinetuneResult out{init, num_users, links, {}, Rng(0)};
  EncoderModel& model = out.model;
  TrainReport& report = out.report;
  report.metric = "AUC";
  const RecContext ctx(items.graph, items.features, num_users, links, config.path_len,
                       config.max_paths);
  for (const auto& r : all) ctx.check_pair({r.user, r.item});
  Rng init_rng(Rng::mix(config.seed, 7));
  add_recommendation_params(model, num_users, num_items, init_rng);
  if (config.freeze_encoders) {
    for (const auto& name : model.params.names()) {
      if (!is_head(name)) model.params.set_trainable(name, false);
    }
  }

  Rng rng(Rng::mix(config.seed, 5));
  const AdamOptions adam{.lr = config.lr};
  auto best = model.params.snapshot();
  double best_metric = -std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 0; epoch < config.epochs_finetune; ++epoch) {
    double epoch_loss = 0.0;
    std::size_t steps = 0;
    auto step = [&](const Tensor& loss) {
      backward(loss);
      detail::fill_missing_grads(model.params);
      adam_step(model.params, adam);
      epoch_loss += loss.item();
      ++steps;
    };

    if (config.rec_loss == RecLossKind::kBce) {
      std::vector<Interaction> examples = train;
      for (const auto& p : train_pos) {
        for (std::size_t k = 0; k < config.neg_ratio; ++k) {
          if (auto item = sample_item(seen[p.user], num_items, rng)) {
            examples.push_back({p.user, *item, 0});
          }
        }
      }
      rng.shuffle(examples);
      for (const auto& batch : detail::make_batches(examples, config.batch)) {
        const std::uint64_t step_seed = rng();
        Rng drop(Rng::mix(step_seed, 1));
        std::vector<UserItem> pairs, positives;
        std::vector<int> labels;
        for (const auto& r : batch) {
          pairs.push_back({r.user, r.item});
          labels.push_back(r.label);
          if (r.label == 1) positives.push_back({r.user, r.item});
        }
        const RecContext step_ctx = ctx.without(positives);
        step(bce_loss(rec_logits(model, step_ctx, pairs, Rng::mix(step_seed, 2), &drop), labels));
      }
    } else {
      struct BprExample {
        UserItem pos;
        EntityId neg;
      };
      std::vector<BprExample> triples;
      for (const auto& p : train_pos) {
        for (std::size_t k = 0; k < std::max<std::size_t>(1, config.neg_ratio); ++k) {
          if (auto item = sample_item(liked[p.user], num_items, rng)) {
            triples.push_back({p, *item});
          }
        }
      }
      rng.shuffle(triples);
      for (const auto& batch : detail::make_batches(triples, config.batch)) {
        const std::uint64_t step_seed = rng();
        Rng drop(Rng::mix(step_seed, 1));
        std::vector<UserItem> pairs;
        for (const auto& t : batch) pairs.push_back(t.pos);
        for (const auto& t : batch) pairs.push_back({t.pos.user, t.neg});
        const RecContext step_ctx = ctx.without(std::span(pairs).first(batch.size()));
        const Tensor logits = rec_logits(model, step_ctx, pairs, Rng::mix(step_seed, 2), &drop);
        step(bpr_loss(slice_rows(logits, 0, batch.size()),
                      slice_rows(logits, batch.size(), 2 * batch.size())));
      }
    }
    report.steps += steps;
    report.losses.push_back(steps ? epoch_loss / static_cast<double>(steps) : 0.0);
    report.epochs_run = epoch + 1;

    if (val.empty()) {
      best = model.params.snapshot();
      report.best_epoch = epoch;
      continue;
    }
    const double value = validation_auc(model, ctx, val, config.seed);
    report.validation.push_back(value);
    log_info("finetune epoch " + std::to_string(epoch + 1) + " loss " +
             std::to_string(report.losses.back()) + " val AUC " + std::to_string(value));
    if (value > best_metric) {
      best_metric = value;
      best = model.params.snapshot();
      report.best_epoch = epoch;
    }
    if (early_stop_check(report.validation, config.patience).stop) break;
  }
  if (report.epochs_run > 0) model.params.restore(best);
  if (config.freeze_encoders) {
    for (const auto& name : model.params.names()) model.params.set_trainable(name, true);
  }
  out.rng = rng;
  report.wall_seconds = detail::seconds_since(start);
  return out;
}

}  // namespace kgfuse
