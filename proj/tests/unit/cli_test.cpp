#include <gtest/gtest.h>

#include <json.hpp>

#include <cmath>
#include <limits>
#include <sstream>

#include "kgfuse/checkpoint.hpp"
#include "kgfuse/cli.hpp"
#include "kgfuse/config.hpp"
#include "kgfuse/error.hpp"
#include "kgfuse/io.hpp"
#include "temp_dir.hpp"

using namespace kgfuse;
using namespace kgfuse::testing;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_command(args, out, err);
  return {code, out.str(), err.str()};
}

std::string config_error(std::string_view text) {
  try {
    parse_config(text, "c.cfg");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

Checkpoint sample_checkpoint() {
  Checkpoint c;
  c.phase = Phase::kFinetuned;
  c.config_text = "d = 8\n";
  c.tensors.push_back({"w", {2, 3}, {1.5, -0.0, 1e-310, std::numeric_limits<double>::max(), -2, 3}});
  c.tensors.push_back({"b", {1, 1}, {0.1}});
  c.rng = {1, 2, 0xFFFFFFFFFFFFFFFFULL, 42};
  return c;
}

const char* kTinyConfig =
    "d = 8\nheads = 2\nL = 1\nE1 = 2\nE2 = 2\nbatch = 8\nk_neg = 4\nbank = 16\nfanout = 3\n"
    "dropout = 0.1\n";

// Small dataset plus a config, written once per test.
struct Workspace {
  TempDir dir;
  std::string data = (dir / "D").string();
  std::string cfg = (dir / "c.cfg").string();
  Workspace() {
    write_file(cfg, kTinyConfig);
    const auto r = run({"gen-synthetic", "--out", data, "--entities", "30", "--users", "5",
                        "--seed", "3", "--text-dim", "6", "--image-dim", "6"});
    EXPECT_EQ(r.code, 0) << r.err;
  }
  std::vector<std::string> pretrain_args(const std::string& out) const {
    return {"pretrain",   "--config", cfg,  "--graph-a", data + "/graph_a", "--graph-b",
            data + "/graph_b", "--align", data + "/alignments_train.tsv", "--out", out};
  }
};

}  // namespace

// ---- config --------------------------------------------------------------

TEST(Config, EmptyFileGivesDocumentedDefaults) {
  const RunConfig c = parse_config("");
  EXPECT_EQ(c.encoder.dim, 64u);
  EXPECT_EQ(c.encoder.heads, 4u);
  EXPECT_EQ(c.encoder.layers, 3u);
  EXPECT_EQ(c.encoder.dropout, 0.1);
  EXPECT_EQ(c.encoder.fanout, 16u);
  EXPECT_EQ(c.encoder.hops, 2u);
  EXPECT_EQ(c.encoder.fusion, FusionStrategy::kGated);
  EXPECT_EQ(c.train.lr, 1e-3);
  EXPECT_EQ(c.train.tau, 0.1);
  EXPECT_EQ(c.train.lambda, 0.0);
  EXPECT_EQ(c.train.epochs_pretrain, 100u);
  EXPECT_EQ(c.train.epochs_finetune, 100u);
  EXPECT_EQ(c.train.batch, 256u);
  EXPECT_EQ(c.train.k_neg, 64u);
  EXPECT_EQ(c.train.bank, 4096u);
  EXPECT_EQ(c.train.patience, 10u);
  EXPECT_EQ(c.train.k_attr, 10u);
  EXPECT_EQ(c.train.path_len, 3u);
  EXPECT_EQ(c.train.rec_loss, RecLossKind::kBce);
  EXPECT_EQ(c.train.seed, 42u);
}

TEST(Config, ParsesValuesCommentsAndWhitespace) {
  const RunConfig c = parse_config(
      "# run\n\n  hops = 2\nfusion=attention_pool\n\ttau = 0.05  \nrec_loss = bpr\n"
      "freeze_encoders = true\nseed = 18446744073709551615\n");
  EXPECT_EQ(c.encoder.hops, 2u);
  EXPECT_EQ(c.encoder.fusion, FusionStrategy::kAttentionPool);
  EXPECT_EQ(c.train.tau, 0.05);
  EXPECT_EQ(c.train.rec_loss, RecLossKind::kBpr);
  EXPECT_TRUE(c.train.freeze_encoders);
  EXPECT_EQ(c.train.seed, 18446744073709551615ULL);
}

TEST(Config, ErrorsCarryLineNumbers) {
  EXPECT_NE(config_error("tau = -1\n").find("c.cfg:1:"), std::string::npos);
  EXPECT_NE(config_error("d = 8\n\nwidth = 3\n").find("c.cfg:3: unknown key 'width'"),
            std::string::npos);
  EXPECT_NE(config_error("d = 8\nL = two\n").find("c.cfg:2:"), std::string::npos);
  EXPECT_NE(config_error("d = 8\nd = 16\n").find("c.cfg:2:"), std::string::npos);
  EXPECT_NE(config_error("batch\n").find("c.cfg:1: expected key = value"), std::string::npos);
  EXPECT_NE(config_error("L = -3\n").find("c.cfg:1:"), std::string::npos);
  EXPECT_NE(config_error("heads = 5\n").find("c.cfg:1:"), std::string::npos);
  EXPECT_NE(config_error("fusion = sum\n").find("c.cfg:1:"), std::string::npos);
}

TEST(Config, TextRoundTrip) {
  RunConfig c;
  c.encoder.dim = 12;
  c.encoder.heads = 3;
  c.encoder.dropout = 0.123456789;
  c.train.lr = 3.3e-4;
  c.train.rec_loss = RecLossKind::kBpr;
  c.train.seed = 9;
  EXPECT_EQ(parse_config(config_to_text(c)), c);
  const std::string text = config_to_text(RunConfig{});
  for (const auto& key : config_keys()) {
    EXPECT_NE(text.find(key + " = "), std::string::npos) << key;
  }
}

TEST(Config, MissingFileIsIoError) { EXPECT_THROW(load_config("/nonexistent/c.cfg"), IoError); }

// ---- checkpoint ----------------------------------------------------------

TEST(Checkpoint, RoundTripIsBitExact) {
  const Checkpoint c = sample_checkpoint();
  const Checkpoint back = decode_checkpoint(encode_checkpoint(c));
  EXPECT_EQ(back, c);
  EXPECT_TRUE(std::signbit(back.tensors[0].values[1]));
}

TEST(Checkpoint, ByteLayout) {
  const std::string bytes = encode_checkpoint(sample_checkpoint());
  EXPECT_EQ(bytes.substr(0, 4), "CGMK");
  EXPECT_EQ(bytes.substr(4, 4), std::string("\x01\x00\x00\x00", 4));
  EXPECT_EQ(bytes[8], '\x01');
  EXPECT_EQ(bytes.substr(9, 4), std::string("\x06\x00\x00\x00", 4));
  EXPECT_EQ(bytes.substr(13, 6), "d = 8\n");
  // Two tensors of 6 and 1 values, 32 bytes of RNG state.
  const std::size_t expected = 4 + 4 + 1 + 4 + 6 + 4 + (2 + 1 + 1 + 8 + 48) + (2 + 1 + 1 + 8 + 8) + 32;
  EXPECT_EQ(bytes.size(), expected);
}

TEST(Checkpoint, CorruptedMagicIsFormatError) {
  std::string bytes = encode_checkpoint(sample_checkpoint());
  bytes[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bytes), FormatError);
}

TEST(Checkpoint, BumpedVersionIsVersionError) {
  std::string bytes = encode_checkpoint(sample_checkpoint());
  bytes[4] = 2;
  EXPECT_THROW(decode_checkpoint(bytes), VersionError);
}

TEST(Checkpoint, TruncationAndTrailingBytesAreFormatErrors) {
  const std::string bytes = encode_checkpoint(sample_checkpoint());
  for (std::size_t n : {std::size_t{3}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
    EXPECT_THROW(decode_checkpoint(std::string_view(bytes).substr(0, n)), FormatError) << n;
  }
  EXPECT_THROW(decode_checkpoint(bytes + "x"), FormatError);
}

TEST(Checkpoint, SaveIsAtomicAndUnwritablePathIsIoError) {
  TempDir dir;
  const auto path = dir / "m.ckpt";
  save_checkpoint(path, sample_checkpoint());
  EXPECT_EQ(load_checkpoint(path), sample_checkpoint());
  EXPECT_FALSE(fs::exists(dir / "m.ckpt.tmp"));
  EXPECT_THROW(save_checkpoint(dir / "missing" / "m.ckpt", sample_checkpoint()), IoError);
}

TEST(Checkpoint, BundleRoundTrip) {
  ModelBundle b;
  b.config.encoder.dim = 4;
  b.config.encoder.heads = 2;
  b.config.encoder.layers = 1;
  b.config.encoder.fusion = FusionStrategy::kAttentionPool;
  Rng rng(3);
  b.model = make_encoder(b.config.encoder, 3, 0, 2, rng);
  add_recommendation_params(b.model, 2, 5, rng);
  b.phase = Phase::kFinetuned;
  b.rng = Rng(77);
  b.num_users = 2;
  b.links = {{0, 1}, {1, 4}};
  const ModelBundle back = from_checkpoint(decode_checkpoint(encode_checkpoint(to_checkpoint(b))));
  EXPECT_EQ(back.config, b.config);
  EXPECT_EQ(back.model.params.snapshot(), b.model.params.snapshot());
  EXPECT_EQ(back.model.text_dim, 3u);
  EXPECT_EQ(back.model.image_dim, 0u);
  EXPECT_EQ(back.model.num_relations, 2u);
  EXPECT_EQ(back.rng, b.rng);
  EXPECT_EQ(back.num_users, 2u);
  EXPECT_EQ(back.links, b.links);
}

TEST(Checkpoint, MissingOrForeignTensorsAreFormatErrors) {
  ModelBundle b;
  b.config.encoder.dim = 4;
  b.config.encoder.heads = 2;
  b.config.encoder.layers = 1;
  Rng rng(3);
  b.model = make_encoder(b.config.encoder, 3, 4, 2, rng);
  Checkpoint c = to_checkpoint(b);
  auto missing = c;
  std::erase_if(missing.tensors, [](const NamedTensor& t) { return t.name == "jk.w"; });
  EXPECT_THROW(from_checkpoint(missing), FormatError);
  auto foreign = c;
  foreign.tensors.push_back({"mystery", {1, 1}, {0.0}});
  EXPECT_THROW(from_checkpoint(foreign), FormatError);
  auto misshapen = c;
  for (auto& t : misshapen.tensors) {
    if (t.name == "jk.b") t = {"jk.b", {1, 2}, {0.0, 0.0}};
  }
  EXPECT_THROW(from_checkpoint(misshapen), FormatError);
}

// ---- commands ------------------------------------------------------------

TEST(Cli, GenSyntheticIsDeterministic) {
  TempDir dir;
  for (const char* name : {"a", "b"}) {
    const auto r = run({"gen-synthetic", "--out", (dir / name).string(), "--entities", "200",
                        "--seed", "7"});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  std::size_t files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(dir / "a")) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), dir / "a");
    EXPECT_EQ(read_file(entry.path()), read_file(dir / "b" / rel)) << rel;
    ++files;
  }
  EXPECT_GE(files, 10u);
}

TEST(Cli, PretrainWritesPretrainedCheckpointAndEvalAlignReports) {
  Workspace w;
  const auto ckpt = (w.dir / "m.ckpt").string();
  const auto r = run(w.pretrain_args(ckpt));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(load_checkpoint(ckpt).phase, Phase::kPretrained);
  EXPECT_NE(r.err.find("effective config: d = 8,"), std::string::npos);
  EXPECT_NE(r.err.find("k_attr = 10"), std::string::npos);
  const auto report = nlohmann::json::parse(r.out);
  EXPECT_EQ(report["phase"], "pretrained");
  EXPECT_EQ(report["losses"].size(), 2u);

  const auto e = run({"eval-align", "--ckpt", ckpt, "--graph-a", w.data + "/graph_a",
                      "--graph-b", w.data + "/graph_b", "--align",
                      w.data + "/alignments_test.tsv"});
  ASSERT_EQ(e.code, 0) << e.err;
  const auto j = nlohmann::json::parse(e.out);
  for (const char* key : {"Hits@1", "Hits@10", "MRR"}) {
    ASSERT_TRUE(j.contains(key)) << key;
    EXPECT_GE(j[key].get<double>(), 0.0);
    EXPECT_LE(j[key].get<double>(), 1.0);
  }
}

TEST(Cli, FullPipelineIsByteDeterministic) {
  Workspace w;
  std::vector<std::string> outputs;
  for (const char* tag : {"1", "2"}) {
    const auto pre = (w.dir / (std::string("m") + tag + ".ckpt")).string();
    const auto fin = (w.dir / (std::string("f") + tag + ".ckpt")).string();
    const auto r1 = run(w.pretrain_args(pre));
    ASSERT_EQ(r1.code, 0) << r1.err;
    const auto r2 = run({"finetune", "--ckpt", pre, "--graph", w.data + "/graph_a",
                         "--interactions", w.data + "/interactions_train.tsv", "--out", fin});
    ASSERT_EQ(r2.code, 0) << r2.err;
    const auto r3 = run({"eval-rec", "--ckpt", fin, "--graph", w.data + "/graph_a",
                         "--interactions", w.data + "/interactions_test.tsv"});
    ASSERT_EQ(r3.code, 0) << r3.err;
    const auto r4 = run({"predict", "--ckpt", fin, "--graph", w.data + "/graph_a", "--user", "0",
                         "--item", "3"});
    ASSERT_EQ(r4.code, 0) << r4.err;
    outputs.push_back(read_file(pre) + read_file(fin) + r1.out + r2.out + r3.out + r4.out);
    const auto p = nlohmann::json::parse(r4.out)["predictions"][0]["probability"].get<double>();
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
    EXPECT_EQ(load_checkpoint(fin).phase, Phase::kFinetuned);
    const auto rec = nlohmann::json::parse(r3.out);
    for (const char* key : {"AUC", "Recall@10", "NDCG@10"}) EXPECT_TRUE(rec.contains(key)) << key;
  }
  EXPECT_EQ(outputs[0], outputs[1]);
}

TEST(Cli, ExitCodes) {
  Workspace w;
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  EXPECT_EQ(run({"pretrain", "--bogus-flag"}).code, 1);
  EXPECT_EQ(run({"--help"}).code, 0);
  EXPECT_EQ(run({"eval-align", "--ckpt", (w.dir / "absent.ckpt").string(), "--graph-a",
                 w.data + "/graph_a", "--graph-b", w.data + "/graph_b", "--align",
                 w.data + "/alignments_test.tsv"})
                .code,
            2);
  // Bad config value: a validation-class failure.
  write_file(w.cfg, "tau = -1\n");
  const auto bad = run(w.pretrain_args((w.dir / "m.ckpt").string()));
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.err.find(":1:"), std::string::npos);
  // Output directory that does not exist.
  write_file(w.cfg, kTinyConfig);
  EXPECT_EQ(run(w.pretrain_args((w.dir / "no" / "m.ckpt").string())).code, 2);
  // A corrupted checkpoint.
  write_file(w.dir / "junk.ckpt", "nonsense");
  EXPECT_EQ(run({"predict", "--ckpt", (w.dir / "junk.ckpt").string(), "--graph",
                 w.data + "/graph_a", "--user", "0", "--item", "1"})
                .code,
            1);
}

TEST(Cli, PredictNeedsFinetunedCheckpointAndKnownIds) {
  Workspace w;
  const auto pre = (w.dir / "m.ckpt").string();
  const auto fin = (w.dir / "f.ckpt").string();
  ASSERT_EQ(run(w.pretrain_args(pre)).code, 0);
  ASSERT_EQ(run({"finetune", "--ckpt", pre, "--graph", w.data + "/graph_a", "--interactions",
                 w.data + "/interactions_train.tsv", "--out", fin})
                .code,
            0);
  EXPECT_EQ(run({"predict", "--ckpt", pre, "--graph", w.data + "/graph_a", "--user", "0",
                 "--item", "1"})
                .code,
            1);
  const auto r = run({"predict", "--ckpt", fin, "--graph", w.data + "/graph_a", "--user", "999",
                      "--item", "1"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("user 999"), std::string::npos);
  EXPECT_EQ(run({"predict", "--ckpt", fin, "--graph", w.data + "/graph_a", "--user", "0"}).code, 1);
}
