#include <algorithm>
#include <chrono>
#include <limits>
#include <numeric>

#include "common.hpp"
#include "kgfuse/error.hpp"
#include "kgfuse/log.hpp"
#include "kgfuse/negatives.hpp"
#include "kgfuse/training.hpp"

namespace kgfuse {

EncoderModel init_encoder(const EncoderConfig& config, std::span<const GraphView> graphs,
                          std::uint64_t seed) {
  std::size_t text_dim = 0, image_dim = 0, relations = 0;
  auto agree = [](std::size_t& slot, std::size_t dim, const char* what) {
    if (dim == 0) return;
    if (slot != 0 && slot != dim) {
      throw SchemaError(std::string(what) + " feature dims differ between graphs (" +
                        std::to_string(slot) + " vs " + std::to_string(dim) + ")");
    }
    slot = dim;
  };
  for (const auto& g : graphs) {
    agree(text_dim, g.features.text_dim(), "text");
    agree(image_dim, g.features.image_dim(), "image");
    relations = std::max(relations, g.graph.data_relation_span());
  }
  Rng rng(Rng::mix(seed, 0x1417));
  return make_encoder(config, text_dim, image_dim, relations, rng);
}

namespace {

std::vector<std::vector<double>> embed_range(const EncoderModel& model, const GraphView& g,
                                             std::uint64_t seed) {
  std::vector<EntityId> ids(g.graph.num_entities());
  std::iota(ids.begin(), ids.end(), EntityId{0});
  return embed_all(model, g.graph, g.features, ids, seed);
}

// (Hits@1, MRR) on the validation pairs; MRR only breaks Hits@1 ties.
std::pair<double, double> validation_scores(const EncoderModel& model, const GraphView& a,
                                            const GraphView& b, const std::vector<AlignedPair>& val,
                                            std::uint64_t seed) {
  std::vector<EntityId> ids;
  for (const auto& p : val) ids.push_back(p.a);
  const auto rows = embed_all(model, a.graph, a.features, ids, seed);
  std::vector<std::vector<double>> emb_a(a.graph.num_entities());
  for (std::size_t i = 0; i < ids.size(); ++i) emb_a[ids[i]] = rows[i];
  const auto emb_b = embed_range(model, b, seed);
  const std::size_t ks[] = {1};
  const auto report = eval_alignment(emb_a, emb_b, val, ks);
  return {*report.get("Hits@1"), *report.get("MRR")};
}

Tensor consistency_term(const BatchEncoding& enc) {
  const Tensor diff = sub(enc.z, enc.structural.detach());
  return scale(sum(mul(diff, diff)), 1.0 / static_cast<double>(enc.z.rows()));
}

}  // namespace

PretrainResult pretrain(const GraphView& a, const GraphView& b, const AlignmentSet& alignments,
                        const EncoderConfig& encoder, const TrainConfig& config,
                        const EncoderModel* init) {
  const auto start = std::chrono::steady_clock::now();
  encoder.validate();
  config.validate();
  if (alignments.positives.empty()) throw ValidationError("alignment set is empty");
  alignments.validate(a.graph.num_entities(), b.graph.num_entities());

  const GraphView both[] = {a, b};
  PretrainResult out{init ? *init : init_encoder(encoder, both, config.seed), {}, Rng(0)};
  EncoderModel& model = out.model;
  TrainReport& report = out.report;
  report.metric = "Hits@1";
  Rng rng(Rng::mix(config.seed, 1));

  const auto& all = alignments.positives;
  std::vector<AlignedPair> train, val;
  if (all.size() >= 2) {
    const auto [ti, vi] = split_indices(all.size(), 0.1, Rng::mix(config.seed, 2));
    for (auto i : ti) train.push_back(all[i]);
    for (auto i : vi) val.push_back(all[i]);
  } else {
    train = all;
  }

  const PairExclusion exclusion(all);
  MemoryBank bank(config.bank, model.config.dim);
  const AdamOptions adam{.lr = config.lr};
  auto best = model.params.snapshot();
  std::pair<double, double> best_metric{-std::numeric_limits<double>::infinity(), 0.0};
  std::size_t stale = 0;

  for (std::size_t epoch = 0; epoch < config.epochs_pretrain; ++epoch) {
    std::vector<AlignedPair> order = train;
    rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t steps = 0;
    for (const auto& batch : detail::make_batches(order, config.batch)) {
      if (batch.size() < 2) continue;
      const std::uint64_t step_seed = rng();
      Rng drop(Rng::mix(step_seed, 1));
      std::vector<EntityId> a_ids, b_ids;
      for (const auto& p : batch) {
        a_ids.push_back(p.a);
        b_ids.push_back(p.b);
      }
      const auto enc_a = encode_batch(model, a.graph, a.features, a_ids,
                                      {.subgraph_seed = Rng::mix(step_seed, 2), .dropout_rng = &drop});
      const auto enc_b = encode_batch(model, b.graph, b.features, b_ids,
                                      {.subgraph_seed = Rng::mix(step_seed, 3), .dropout_rng = &drop});

      std::size_t k = config.k_neg;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        k = std::min(k, available_negatives(batch, i, bank, exclusion));
      }
      if (k == 0) {
        log_warning("batch has no usable negatives; skipped");
        continue;
      }
      const auto negs = sample_negatives(batch, bank, k, exclusion, Rng::mix(step_seed, 4));

      // Candidate rows: this batch's graph-B encodings, then bank entries.
      std::vector<double> bank_rows;
      std::vector<std::size_t> pick;
      for (const auto& list : negs) {
        for (const auto& n : list) {
          if (n.source == NegativeRef::Source::kBatch) {
            pick.push_back(n.index);
          } else {
            pick.push_back(batch.size() + bank_rows.size() / model.config.dim);
            const auto& e = bank.slot(n.index).embedding;
            bank_rows.insert(bank_rows.end(), e.begin(), e.end());
          }
        }
      }
      Tensor candidates = enc_b.z;
      if (!bank_rows.empty()) {
        const std::size_t rows = bank_rows.size() / model.config.dim;
        candidates = concat_rows(
            {enc_b.z, Tensor::from({rows, model.config.dim}, std::move(bank_rows))});
      }
      Tensor loss = info_nce_loss(enc_a.z, enc_b.z, gather_rows(candidates, pick), k, config.tau);
      if (config.lambda > 0) {
        loss = add(loss, scale(add(consistency_term(enc_a), consistency_term(enc_b)),
                               0.5 * config.lambda));
      }

      backward(loss);
      detail::fill_missing_grads(model.params);
      adam_step(model.params, adam);
      for (std::size_t i = 0; i < batch.size(); ++i) bank.push(b_ids[i], enc_b.z.row_values(i));
      epoch_loss += loss.item();
      ++steps;
    }
    report.steps += steps;
    report.losses.push_back(steps ? epoch_loss / static_cast<double>(steps) : 0.0);
    report.epochs_run = epoch + 1;

    if (val.empty()) {
      best = model.params.snapshot();
      report.best_epoch = epoch;
      continue;
    }
    const auto scores = validation_scores(model, a, b, val, config.seed);
    report.validation.push_back(scores.first);
    log_info("pretrain epoch " + std::to_string(epoch + 1) + " loss " +
             std::to_string(report.losses.back()) + " val Hits@1 " +
             std::to_string(scores.first) + " MRR " + std::to_string(scores.second));
    // Ties go to the later epoch; a small validation split saturates early.
    if (scores >= best_metric) {
      best_metric = scores;
      best = model.params.snapshot();
      report.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= config.patience) {
      break;
    }
  }
  if (report.epochs_run > 0) model.params.restore(best);
  out.rng = rng;
  report.wall_seconds = detail::seconds_since(start);
  return out;
}

}  // namespace kgfuse
