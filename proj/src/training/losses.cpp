#include <cmath>
#include <numeric>
#include <string>

#include "kgfuse/error.hpp"
#include "kgfuse/training.hpp"

namespace kgfuse {

RecLossKind parse_rec_loss(std::string_view name) {
  if (name == "bce") return RecLossKind::kBce;
  if (name == "bpr") return RecLossKind::kBpr;
  throw ConfigError("unknown rec_loss '" + std::string(name) + "' (expected bce or bpr)");
}

std::string_view rec_loss_name(RecLossKind kind) {
  return kind == RecLossKind::kBce ? "bce" : "bpr";
}

void TrainConfig::validate() const {
  if (!(tau > 0) || !std::isfinite(tau)) throw ConfigError("tau must be > 0");
  if (!(lr > 0) || !std::isfinite(lr)) throw ConfigError("lr must be > 0");
  if (!(lambda >= 0) || !std::isfinite(lambda)) throw ConfigError("lambda must be >= 0");
  if (batch < 2) throw ConfigError("batch must be >= 2");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (k_neg < 1) throw ConfigError("k_neg must be >= 1");
  if (bank < 1) throw ConfigError("bank must be >= 1");
  if (k_attr < 1) throw ConfigError("k_attr must be >= 1");
  if (path_len < 1) throw ConfigError("path_len must be >= 1");
  if (max_paths < 1) throw ConfigError("max_paths must be >= 1");
}

Tensor info_nce_from_similarities(const Tensor& sims, double tau) {
  if (!(tau > 0)) throw ConfigError("InfoNCE temperature must be > 0");
  if (sims.cols() < 2) throw ContractError("InfoNCE needs at least one negative per anchor");
  const Tensor log_p = log_softmax_rows(scale(sims, 1.0 / tau));
  return scale(mean(slice_cols(log_p, 0, 1)), -1.0);
}

Tensor info_nce_loss(const Tensor& anchors, const Tensor& positives, const Tensor& negatives,
                     std::size_t per_anchor, double tau) {
  const std::size_t b = anchors.rows();
  if (positives.shape() != anchors.shape()) {
    throw DimensionError("anchors " + shape_string(anchors.shape()) + " vs positives " +
                         shape_string(positives.shape()));
  }
  if (per_anchor == 0 || negatives.rows() != b * per_anchor) {
    throw DimensionError("expected " + std::to_string(per_anchor) + " negatives per anchor");
  }
  const Tensor na = normalize_rows(anchors);
  const Tensor pos = rowwise_dot(na, normalize_rows(positives));
  std::vector<std::size_t> repeat(b * per_anchor);
  for (std::size_t i = 0; i < repeat.size(); ++i) repeat[i] = i / per_anchor;
  const Tensor neg =
      reshape(rowwise_dot(gather_rows(na, repeat), normalize_rows(negatives)), b, per_anchor);
  return info_nce_from_similarities(concat_cols({pos, neg}), tau);
}

double score_pair(std::span<const double> h_u, std::span<const double> h_v) {
  if (h_u.size() != h_v.size()) {
    throw ContractError("score_pair dims differ: " + std::to_string(h_u.size()) + " vs " +
                        std::to_string(h_v.size()));
  }
  return std::inner_product(h_u.begin(), h_u.end(), h_v.begin(), 0.0);
}

Tensor bce_loss(const Tensor& scores, std::span<const int> labels) {
  if (scores.cols() != 1 || scores.rows() != labels.size()) {
    throw DimensionError("bce_loss expects one score per label");
  }
  std::vector<double> sign(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw ValidationError("bce labels must be 0 or 1");
    sign[i] = labels[i] == 1 ? 1.0 : -1.0;
  }
  return scale(mean(log_sigmoid(mul(scores, Tensor::column(std::move(sign))))), -1.0);
}

Tensor bpr_loss(const Tensor& pos, const Tensor& neg) {
  if (pos.shape() != neg.shape()) throw DimensionError("bpr_loss score shapes differ");
  return scale(mean(log_sigmoid(sub(pos, neg))), -1.0);
}

}  // namespace kgfuse
