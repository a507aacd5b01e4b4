#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "fixtures.hpp"
#include "gat_oracle.hpp"
#include "kgfuse/encoder.hpp"
#include "kgfuse/error.hpp"

using namespace kgfuse;
using namespace kgfuse::testing;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng) {
  std::vector<double> v(r * c);
  for (double& x : v) x = rng.normal();
  return Tensor::from({r, c}, std::move(v));
}

EncoderModel small_model(std::uint64_t seed, FusionStrategy fusion = FusionStrategy::kGated,
                         std::size_t relations = 3) {
  Rng rng(seed);
  return make_encoder(small_config(fusion), 3, 4, relations, rng);
}

std::vector<double> row(const Tensor& t, std::size_t r) { return t.row_values(r); }

void expect_near(std::span<const double> a, std::span<const double> b, double tol) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "index " << i;
}

// Plain row-vector times matrix.
std::vector<double> vecmat(std::span<const double> v, const Tensor& m) {
  std::vector<double> out(m.cols(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out[j] += v[i] * m.at(i, j);
  return out;
}

void expect_simplex_by_segment(const Tensor& w, std::span<const std::size_t> seg) {
  std::map<std::size_t, std::vector<double>> sums;
  for (std::size_t r = 0; r < w.rows(); ++r) {
    auto& s = sums[seg[r]];
    s.resize(w.cols(), 0.0);
    for (std::size_t c = 0; c < w.cols(); ++c) {
      EXPECT_GE(w.at(r, c), 0.0);
      s[c] += w.at(r, c);
    }
  }
  for (const auto& [_, s] : sums)
    for (double x : s) EXPECT_NEAR(x, 1.0, 1e-12);
}

}  // namespace

// ---- config --------------------------------------------------------------

TEST(EncoderConfig, Validation) {
  EncoderConfig c;
  EXPECT_NO_THROW(c.validate());
  c.heads = 5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.layers = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.dropout = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(parse_fusion("max"), ConfigError);
  EXPECT_EQ(parse_fusion("attention_pool"), FusionStrategy::kAttentionPool);
}

// ---- attribute pooling ---------------------------------------------------

TEST(AggregateAttributes, SingleVectorIsItsProjection) {
  auto m = small_model(1);
  Rng rng(2);
  auto x = random_tensor(1, 3, rng);
  auto pooled = aggregate_attributes(x, m.params);
  EXPECT_EQ(pooled.weights.item(), 1.0);
  auto expected = vecmat(x.data(), m.params["attr.proj.w"]);
  for (std::size_t j = 0; j < expected.size(); ++j) expected[j] += m.params["attr.proj.b"].data()[j];
  expect_near(pooled.out.data(), expected, 1e-12);
}

TEST(AggregateAttributes, TwoIdenticalVectorsEqualOneCopy) {
  auto m = small_model(1);
  Rng rng(3);
  auto x = random_tensor(1, 3, rng);
  auto one = aggregate_attributes(x, m.params).out;
  auto two = aggregate_attributes(concat_rows({x, x}), m.params).out;
  expect_near(one.data(), two.data(), 1e-12);
}

TEST(AggregateAttributes, PermutationInvariant) {
  auto m = small_model(4);
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    auto x = random_tensor(5, 3, rng);
    std::vector<std::size_t> perm(5);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    auto a = aggregate_attributes(x, m.params);
    auto b = aggregate_attributes(gather_rows(x, perm), m.params);
    expect_near(a.out.data(), b.out.data(), 1e-12);
    for (std::size_t i = 0; i < 5; ++i)
      EXPECT_NEAR(b.weights.data()[i], a.weights.data()[perm[i]], 1e-12);
  }
}

TEST(AggregateAttributes, DimMismatchIsSchemaError) {
  auto m = small_model(1);
  EXPECT_THROW(aggregate_attributes(Tensor::zeros(2, 5), m.params), SchemaError);
}

TEST(AggregateAttributes, WeightsOnSimplexPerEntity) {
  auto m = small_model(1);
  Rng rng(6);
  const std::vector<std::size_t> owner{0, 0, 1, 2, 2, 2};
  auto p = aggregate_attributes(random_tensor(6, 3, rng), owner, 3, m.params);
  expect_simplex_by_segment(p.weights, owner);
}

// ---- cross-modal fusion --------------------------------------------------

TEST(CrossModalFuse, SingleTokensReduceToValueProjections) {
  auto m = small_model(7);
  Rng rng(8);
  auto t = random_tensor(1, 4, rng), i = random_tensor(1, 4, rng);
  auto f = cross_modal_fuse(t, i, 2, m.params);
  for (double w : f.text_to_image.data()) EXPECT_EQ(w, 1.0);
  for (double w : f.image_to_text.data()) EXPECT_EQ(w, 1.0);
  const auto& p = m.params;
  const auto v1 = vecmat(i.data(), p["fuse.t2i.wv"]);
  const auto v2 = vecmat(t.data(), p["fuse.i2t.wv"]);
  std::vector<double> avg(4);
  for (std::size_t k = 0; k < 4; ++k) avg[k] = 0.5 * (v1[k] + v2[k]);
  auto expected = vecmat(avg, p["fuse.out.w"]);
  for (std::size_t k = 0; k < 4; ++k) expected[k] += p["fuse.out.b"].data()[k];
  expect_near(f.out.data(), expected, 1e-12);
}

TEST(CrossModalFuse, ZeroInputsGiveBias) {
  auto m = small_model(7);
  m.params.assign("fuse.out.b", std::vector<double>{0.1, -0.2, 0.3, 0.4});
  auto f = cross_modal_fuse(Tensor::zeros(1, 4), Tensor::zeros(1, 4), 2, m.params);
  expect_near(f.out.data(), m.params["fuse.out.b"].data(), 0.0);
}

TEST(CrossModalFuse, HeadsMustDivideDim) {
  auto m = small_model(7);
  EXPECT_THROW(cross_modal_fuse(Tensor::zeros(1, 4), Tensor::zeros(1, 4), 3, m.params),
               ConfigError);
}

TEST(CrossModalFuse, GradientWrtQueryWeightsMatchesFiniteDifferences) {
  auto m = small_model(9);
  Rng rng(10);
  // Several tokens per entity so the softmax actually depends on W_q.
  auto text = random_tensor(5, 4, rng), image = random_tensor(4, 4, rng);
  const std::vector<std::size_t> t_owner{0, 0, 0, 1, 1}, i_owner{0, 0, 1, 1};
  auto w = random_tensor(2, 4, rng);
  std::vector<Tensor> inputs{m.params["fuse.t2i.wq"], m.params["fuse.i2t.wq"]};
  auto f = [&] {
    return sum(mul(cross_modal_fuse(text, t_owner, image, i_owner, 2, 2, m.params).out, w));
  };
  EXPECT_LE(grad_check(f, inputs), 1e-5);
  // And the single-token case, where the gradient is exactly zero.
  std::vector<Tensor> single{m.params["fuse.t2i.wq"]};
  auto t1 = random_tensor(1, 4, rng), i1 = random_tensor(1, 4, rng);
  EXPECT_LE(grad_check([&] { return sum(cross_modal_fuse(t1, i1, 2, m.params).out); }, single),
            1e-5);
}

TEST(CrossModalFuse, MultiTokenWeightsOnSimplexPerQueryAndHead) {
  auto m = small_model(11);
  Rng rng(12);
  auto text = random_tensor(3, 4, rng), image = random_tensor(3, 4, rng);
  const std::vector<std::size_t> t_owner{0, 0, 1}, i_owner{0, 1, 1};
  auto f = cross_modal_fuse(text, t_owner, image, i_owner, 2, 2, m.params);
  // Text tokens 0,1 each see one image token; token 2 sees two.
  ASSERT_EQ(f.text_to_image.rows(), 4u);
  expect_simplex_by_segment(f.text_to_image, std::vector<std::size_t>{0, 1, 2, 2});
  ASSERT_EQ(f.image_to_text.rows(), 4u);
  expect_simplex_by_segment(f.image_to_text, std::vector<std::size_t>{0, 0, 1, 2});
}

// ---- GAT -----------------------------------------------------------------

TEST(GatLayer, SelfLoopOnlyNode) {
  auto m = small_model(13);
  Rng rng(14);
  auto h = random_tensor(1, 4, rng);
  EdgeList e{{0}, {0}, {3}, 1};
  auto out = gat_layer(e, h, m.params["rel.emb"], 0, Activation::kLeakyRelu, m.params);
  EXPECT_EQ(out.alpha.item(), 1.0);
  auto wh = vecmat(h.data(), m.params["gat.0.wh"]);
  for (std::size_t k = 0; k < 4; ++k) {
    const double act = wh[k] < 0 ? kLeakySlope * wh[k] : wh[k];
    EXPECT_NEAR(out.h.data()[k], act + h.data()[k], 1e-12);
  }
}

TEST(GatLayer, IdenticalNeighboursShareWeightEqually) {
  auto m = small_model(13);
  Rng rng(15);
  auto x = random_tensor(1, 4, rng);
  auto h = concat_rows({random_tensor(1, 4, rng), x, x});
  EdgeList e{{0, 0, 1, 2}, {1, 2, 1, 2}, {1, 1, 3, 3}, 3};
  auto out = gat_layer(e, h, m.params["rel.emb"], 0, Activation::kLeakyRelu, m.params);
  EXPECT_NEAR(out.alpha.data()[0], 0.5, 1e-15);
  EXPECT_NEAR(out.alpha.data()[1], 0.5, 1e-15);
}

TEST(GatLayer, NodeWithoutEdgesIsContractError) {
  auto m = small_model(13);
  EdgeList e{{0}, {0}, {3}, 2};
  EXPECT_THROW(gat_layer(e, Tensor::zeros(2, 4), m.params["rel.emb"], 0, Activation::kIdentity,
                         m.params),
               ContractError);
}

TEST(GatLayer, MatchesDenseBruteForceOnRandomSmallGraphs) {
  const auto r = gat_oracle(100, 2718, [](std::uint64_t seed) { return small_model(seed); });
  EXPECT_EQ(r.graphs, 100u);
  EXPECT_LE(r.max_error, 1e-10);
  EXPECT_LE(r.max_simplex_error, 1e-12);
}

// ---- jumping knowledge, aggregation, personalization ---------------------

TEST(JumpingKnowledge, IdenticalLayersGiveProjection) {
  auto m = small_model(16);
  Rng rng(17);
  auto x = random_tensor(2, 4, rng);
  const Tensor layers[] = {x, x, x};
  const Tensor one[] = {x};
  expect_near(jumping_knowledge(layers, m.params).data(), jumping_knowledge(one, m.params).data(),
              0.0);
}

TEST(JumpingKnowledge, OneLayerIsElementwiseMax) {
  auto m = small_model(16);
  auto h0 = Tensor::matrix({{1, -2, 3, 0}}), h1 = Tensor::matrix({{0, 5, -1, 0}});
  const Tensor layers[] = {h0, h1};
  const Tensor max_layer[] = {Tensor::matrix({{1, 5, 3, 0}})};
  expect_near(jumping_knowledge(layers, m.params).data(),
              jumping_knowledge(max_layer, m.params).data(), 0.0);
}

TEST(JumpingKnowledge, GradientCheck) {
  auto m = small_model(18);
  Rng rng(19);
  auto a = random_tensor(3, 4, rng).clone(true), b = random_tensor(3, 4, rng).clone(true);
  std::vector<Tensor> in{a, b, m.params["jk.w"], m.params["jk.b"]};
  auto w = random_tensor(3, 4, rng);
  EXPECT_LE(grad_check(
                [&] {
                  const Tensor layers[] = {a, b};
                  return sum(mul(jumping_knowledge(layers, m.params), w));
                },
                in),
            1e-5);
}

TEST(AggregateModalities, GatedWithZeroGateIsExactMean) {
  auto m = small_model(20);
  m.params.assign("agg.gate.w", std::vector<double>(32, 0.0));
  Rng rng(21);
  auto h = random_tensor(3, 4, rng), s = random_tensor(3, 4, rng);
  auto out = aggregate_modalities(h, s, FusionStrategy::kGated, m.params);
  for (std::size_t k = 0; k < out.size(); ++k)
    EXPECT_EQ(out.data()[k], (h.data()[k] + s.data()[k]) / 2);
}

TEST(AggregateModalities, AttentionPoolOfIdenticalInputs) {
  auto m = small_model(22, FusionStrategy::kAttentionPool);
  Rng rng(23);
  auto x = random_tensor(3, 4, rng);
  auto personal = random_tensor(3, 2, rng);
  expect_near(aggregate_modalities(x, x, FusionStrategy::kAttentionPool, m.params).data(),
              x.data(), 1e-12);
  expect_near(
      aggregate_modalities(x, x, FusionStrategy::kAttentionPool, m.params, &personal).data(),
      x.data(), 1e-12);
}

TEST(AggregateModalities, ConcatProjectOfZerosIsBias) {
  auto m = small_model(24, FusionStrategy::kConcatProject);
  m.params.assign("agg.concat.b", std::vector<double>{1, 2, 3, 4});
  auto out = aggregate_modalities(Tensor::zeros(1, 4), Tensor::zeros(1, 4),
                                  FusionStrategy::kConcatProject, m.params);
  expect_near(out.data(), std::vector<double>{1, 2, 3, 4}, 0.0);
}

TEST(AggregateModalities, ShapeMismatch) {
  auto m = small_model(24);
  EXPECT_THROW(aggregate_modalities(Tensor::zeros(1, 4), Tensor::zeros(2, 4),
                                    FusionStrategy::kGated, m.params),
               DimensionError);
}

TEST(PersonalizedFusion, Properties) {
  ParameterSet p;
  Rng rng(25);
  p.add_weight("fusion.user.w", 4, 2, rng);
  p.add_zeros("fusion.user.b", 1, 2);
  auto w0 = personalized_fusion_weights(Tensor::zeros(1, 4), "fusion.user", p);
  expect_near(w0.data(), std::vector<double>{0.5, 0.5}, 0.0);
  for (int trial = 0; trial < 100; ++trial) {
    auto prof = random_tensor(1, 4, rng);
    auto logits = personalized_fusion_logits(prof, "fusion.user", p);
    auto w = softmax_rows(logits);
    EXPECT_NEAR(w.data()[0] + w.data()[1], 1.0, 1e-12);
    auto shifted = softmax_rows(add_scalar(logits, rng.uniform(-50, 50)));
    EXPECT_EQ(w.data()[0] > w.data()[1], shifted.data()[0] > shifted.data()[1]);
  }
}

// ---- full encoder --------------------------------------------------------

TEST(EncodeEntity, IsolatedEntityIsFinite) {
  auto m = small_model(26);
  auto g = six_node_graph();
  auto fs = six_node_features(1);
  auto enc = encode_entity(m, g, fs, 5, 42);
  ASSERT_EQ(enc.z.size(), 4u);
  ASSERT_EQ(enc.layers.size(), 3u);
  for (double v : enc.z) EXPECT_TRUE(std::isfinite(v));
}

TEST(EncodeEntity, DeterministicForSeed) {
  auto m = small_model(26);
  auto g = six_node_graph();
  auto fs = six_node_features(1);
  for (EntityId e = 0; e < 6; ++e) EXPECT_EQ(encode_entity(m, g, fs, e, 42).z, encode_entity(m, g, fs, e, 42).z);
}

TEST(EncodeEntity, IndependentOfBatchComposition) {
  auto m = small_model(27);
  auto g = six_node_graph();
  auto fs = six_node_features(2);
  const std::vector<EntityId> all{0, 1, 2, 3, 4, 5};
  auto batch = embed_all(m, g, fs, all, 9);
  for (EntityId e = 0; e < 6; ++e) expect_near(batch[e], encode_entity(m, g, fs, e, 9).z, 1e-12);
}

TEST(EncodeEntity, ZeroFeaturesGiveFiniteOutput) {
  auto m = small_model(28);
  auto g = six_node_graph();
  FeatureStore fs;
  fs.set_text_dim(3);
  fs.set_image_dim(4);
  for (EntityId e = 0; e < 6; ++e) {
    fs.add_attribute(e, 0, {0, 0, 0});
    fs.set_image(e, {0, 0, 0, 0});
  }
  for (EntityId e = 0; e < 6; ++e)
    for (double v : encode_entity(m, g, fs, e, 1).z) EXPECT_TRUE(std::isfinite(v));
}

TEST(EncodeEntity, FeatureDimMismatchIsSchemaError) {
  auto m = small_model(28);
  auto g = six_node_graph();
  auto fs = six_node_features(1, 5, 4);
  EXPECT_THROW(encode_entity(m, g, fs, 0, 1), SchemaError);
}

TEST(EncodeEntity, ColdEntitiesUseLearnedDefaults) {
  auto m = small_model(29);
  auto g = six_node_graph();
  auto fs = six_node_features(3);
  // Entity 3 has no text: its multimodal vector must move with cold.text.
  auto before = encode_entity(m, g, fs, 3, 1).multimodal;
  auto cold = m.params["cold.text"].row_values(0);
  for (double& v : cold) v += 1.0;
  m.params.assign("cold.text", cold);
  auto after = encode_entity(m, g, fs, 3, 1).multimodal;
  EXPECT_NE(before, after);
  // Entity 0 is warm for both modalities and does not depend on the defaults.
  auto warm_before = encode_entity(small_model(29), g, fs, 0, 1).multimodal;
  EXPECT_EQ(encode_entity(m, g, fs, 0, 1).multimodal, warm_before);
}

class EndToEndGradient : public ::testing::TestWithParam<FusionStrategy> {};

TEST_P(EndToEndGradient, EveryParameterMatchesFiniteDifferences) {
  auto m = small_model(30, GetParam());
  auto g = six_node_graph();
  auto fs = six_node_features(4);
  const std::vector<EntityId> centers{0, 1, 3, 4, 5};
  Rng rng(31);
  auto w = random_tensor(centers.size(), 4, rng);
  auto personal = random_tensor(centers.size(), 2, rng);
  std::vector<Tensor> inputs;
  for (const auto& name : m.params.names()) inputs.push_back(m.params[name]);
  auto f = [&] {
    EncodeOptions opt{.subgraph_seed = 5};
    if (GetParam() == FusionStrategy::kAttentionPool) opt.personal_logits = &personal;
    return sum(mul(encode_batch(m, g, fs, centers, opt).z, w));
  };
  EXPECT_LE(grad_check(f, inputs), 1e-4);
}

INSTANTIATE_TEST_SUITE_P(Strategies, EndToEndGradient,
                         ::testing::Values(FusionStrategy::kGated, FusionStrategy::kConcatProject,
                                           FusionStrategy::kAttentionPool));

TEST(EncodeBatch, DropoutOnlyWithRng) {
  auto cfg = small_config();
  cfg.dropout = 0.5;
  Rng init(32);
  auto m = make_encoder(cfg, 3, 4, 3, init);
  auto g = six_node_graph();
  auto fs = six_node_features(5);
  const std::vector<EntityId> centers{0, 1, 2};
  auto a = encode_batch(m, g, fs, centers, {.subgraph_seed = 1});
  auto b = encode_batch(m, g, fs, centers, {.subgraph_seed = 1});
  expect_near(a.z.data(), b.z.data(), 0.0);
  Rng drop(33);
  auto c = encode_batch(m, g, fs, centers, {.subgraph_seed = 1, .dropout_rng = &drop});
  EXPECT_NE(std::vector<double>(a.z.data().begin(), a.z.data().end()),
            std::vector<double>(c.z.data().begin(), c.z.data().end()));
}

TEST(EncoderModel, RelationRows) {
  auto m = small_model(1, FusionStrategy::kGated, 3);
  EXPECT_EQ(m.relation_row(2), 2u);
  EXPECT_EQ(m.relation_row(kSelfRelation), 3u);
  EXPECT_EQ(m.relation_row(kInteractRelation), 4u);
  EXPECT_THROW(m.relation_row(3), ValidationError);
  EXPECT_EQ(m.params["rel.emb"].rows(), 5u);
}

TEST(EncodeBatch, NodeTableReplacesFeaturesAboveBase) {
  auto m = small_model(40);
  const auto g = six_node_graph();
  const auto fs = six_node_features(4);
  Rng rng(2);
  auto table = random_tensor(2, 4, rng);
  const EncodeOptions opt{.subgraph_seed = 1, .node_table = &table, .node_table_base = 4};
  const std::vector<EntityId> centers{0, 4, 5};
  const auto enc = encode_batch(m, g, fs, centers, opt);
  EXPECT_EQ(row(enc.multimodal, 1), row(table, 0));
  EXPECT_EQ(row(enc.multimodal, 2), row(table, 1));
  EXPECT_EQ(row(enc.multimodal, 0), encode_entity(m, g, fs, 0, 1).multimodal);
  // Entity 0's 2-hop subgraph reaches 4 through 1, so its output changes with the table.
  EXPECT_NE(row(enc.z, 0), encode_entity(m, g, fs, 0, 1).z);

  auto short_table = random_tensor(1, 4, rng);
  const EncodeOptions bad{.subgraph_seed = 1, .node_table = &short_table, .node_table_base = 4};
  EXPECT_THROW(encode_batch(m, g, fs, centers, bad), RangeError);
}
