#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <numeric>
#include <ostream>

#include "kgfuse/cli.hpp"
#include "kgfuse/error.hpp"
#include "kgfuse/io.hpp"
#include "kgfuse/log.hpp"
#include "kgfuse/synthetic.hpp"

namespace kgfuse {

namespace {

using json = nlohmann::ordered_json;

struct LogScope {
  explicit LogScope(std::ostream* s) : saved(log_stream()) { set_log_stream(s); }
  ~LogScope() { set_log_stream(saved); }
  std::ostream* saved;
};

void log_config(const RunConfig& config) {
  std::string text = config_to_text(config);
  text.pop_back();
  std::ranges::replace(text, '\n', ',');
  log_info("effective config: " + text);
}

GraphData load_filtered(const std::string& dir, const RunConfig& config) {
  GraphData g = load_graph(dir);
  g.features.keep_top_k_attributes(config.train.k_attr);
  return g;
}

json report_json(std::string_view command, const TrainReport& r, Phase phase) {
  json j;
  j["command"] = command;
  j["phase"] = phase_name(phase);
  j["epochs_run"] = r.epochs_run;
  j["best_epoch"] = r.best_epoch;
  j["steps"] = r.steps;
  j["metric"] = r.metric;
  j["losses"] = r.losses;
  j["validation"] = r.validation;
  return j;
}

ModelBundle load_bundle(const std::string& path, std::optional<Phase> required) {
  ModelBundle b = from_checkpoint(load_checkpoint(path));
  if (required && b.phase != *required) {
    throw ValidationError("checkpoint '" + path + "' is " + std::string(phase_name(b.phase)) +
                          ", expected " + std::string(phase_name(*required)));
  }
  log_config(b.config);
  return b;
}

std::vector<std::size_t> parse_ks(const std::vector<std::size_t>& ks) {
  for (auto k : ks) {
    if (k == 0) throw ValidationError("K values must be positive");
  }
  return ks;
}

void emit(std::ostream& out, const json& j) { out << j.dump(2) << '\n'; }

// ---- commands ------------------------------------------------------------

struct GenOptions {
  std::string out;
  SyntheticSpec spec;
  std::optional<std::uint64_t> split_seed;
};

void cmd_gen(const GenOptions& o, std::ostream& out) {
  log_info("gen-synthetic: entities=" + std::to_string(o.spec.entities) +
           " latent_dim=" + std::to_string(o.spec.latent_dim) + " noise=" +
           format_double(o.spec.noise) + " seed=" + std::to_string(o.spec.seed) +
           " users=" + std::to_string(o.spec.users) + " text_dim=" +
           std::to_string(o.spec.text_dim) + " image_dim=" + std::to_string(o.spec.image_dim));
  const auto data = gen_synthetic(o.spec);
  write_synthetic(o.out, data, o.split_seed.value_or(o.spec.seed));
  json j;
  j["command"] = "gen-synthetic";
  j["entities"] = o.spec.entities;
  j["triples_a"] = data.graph_a.triples().size();
  j["triples_b"] = data.graph_b.triples().size();
  j["alignments"] = data.alignments.positives.size();
  j["ratings"] = data.ratings.size();
  j["interactions"] = data.interactions.records.size();
  emit(out, j);
}

struct PretrainOptions {
  std::string config, graph_a, graph_b, align, out, init;
};

RunConfig config_or_default(const std::string& path) {
  return path.empty() ? RunConfig{} : load_config(path);
}

void cmd_pretrain(const PretrainOptions& o, std::ostream& out) {
  const RunConfig config = config_or_default(o.config);
  log_config(config);
  const auto a = load_filtered(o.graph_a, config);
  const auto b = load_filtered(o.graph_b, config);
  const auto alignments = load_alignments(o.align);
  std::optional<ModelBundle> init;
  if (!o.init.empty()) init = load_bundle(o.init, Phase::kPretrained);

  const auto start = std::chrono::steady_clock::now();
  auto result = pretrain({a.graph, a.features}, {b.graph, b.features}, alignments, config.encoder,
                         config.train, init ? &init->model : nullptr);
  ModelBundle bundle{config, std::move(result.model), Phase::kPretrained, result.rng, 0, {}};
  save_checkpoint(o.out, to_checkpoint(bundle));
  log_info("pretrain finished in " +
           std::to_string(std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                              .count()) +
           " s; checkpoint " + o.out);
  emit(out, report_json("pretrain", result.report, Phase::kPretrained));
}

struct FinetuneOptions {
  std::string config, ckpt, graph, interactions, out;
  bool binarized = false;
};

void cmd_finetune(const FinetuneOptions& o, std::ostream& out) {
  ModelBundle init = load_bundle(o.ckpt, Phase::kPretrained);
  RunConfig config = init.config;
  if (!o.config.empty()) {
    config = load_config(o.config);
    if (!(config.encoder == init.config.encoder)) {
      throw ValidationError("encoder settings in '" + o.config +
                            "' differ from the pretrained checkpoint");
    }
    log_config(config);
  }
  const auto items = load_filtered(o.graph, config);
  const auto interactions = load_interactions(o.interactions, o.binarized);

  const auto start = std::chrono::steady_clock::now();
  auto result = finetune(init.model, {items.graph, items.features}, interactions, config.train);
  ModelBundle bundle{config,           std::move(result.model), Phase::kFinetuned, result.rng,
                     result.num_users, result.links};
  save_checkpoint(o.out, to_checkpoint(bundle));
  log_info("finetune finished in " +
           std::to_string(std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                              .count()) +
           " s; checkpoint " + o.out);
  emit(out, report_json("finetune", result.report, Phase::kFinetuned));
}

struct EvalAlignOptions {
  std::string ckpt, graph_a, graph_b, align;
  std::vector<std::size_t> ks{1, 10};
};

void cmd_eval_align(const EvalAlignOptions& o, std::ostream& out) {
  const ModelBundle b = load_bundle(o.ckpt, std::nullopt);
  const auto ga = load_filtered(o.graph_a, b.config);
  const auto gb = load_filtered(o.graph_b, b.config);
  const auto pairs = load_alignments(o.align);
  pairs.validate(ga.graph.num_entities(), gb.graph.num_entities());
  auto embed = [&](const GraphData& g) {
    std::vector<EntityId> ids(g.graph.num_entities());
    std::iota(ids.begin(), ids.end(), EntityId{0});
    return embed_all(b.model, g.graph, g.features, ids, b.config.train.seed);
  };
  const auto report = eval_alignment(embed(ga), embed(gb), pairs.positives, parse_ks(o.ks));
  json j;
  j["command"] = "eval-align";
  j.update(report.to_json());
  emit(out, j);
}

struct RecOptions {
  std::string ckpt, graph;
};

struct EvalRecOptions : RecOptions {
  std::string interactions;
  bool binarized = false;
  std::vector<std::size_t> ks{10, 20};
};

RecContext rec_context(const ModelBundle& b, const GraphData& items) {
  return RecContext(items.graph, items.features, b.num_users, b.links, b.config.train.path_len,
                    b.config.train.max_paths);
}

void cmd_eval_rec(const EvalRecOptions& o, std::ostream& out) {
  const ModelBundle b = load_bundle(o.ckpt, Phase::kFinetuned);
  const auto items = load_filtered(o.graph, b.config);
  const auto set = load_interactions(o.interactions, o.binarized);
  const RecContext ctx = rec_context(b, items);
  std::vector<UserItem> pairs;
  for (const auto& r : set.records) pairs.push_back({r.user, r.item});
  const auto probs = predict(b.model, ctx, pairs, b.config.train.seed);
  std::vector<ScoredInteraction> rows;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    rows.push_back({pairs[i].user, pairs[i].item, probs[i], set.records[i].label});
  }
  json j;
  j["command"] = "eval-rec";
  j.update(eval_recommendation(rows, parse_ks(o.ks)).to_json());
  emit(out, j);
}

struct PredictOptions : RecOptions {
  std::string pairs;
  std::optional<UserId> user;
  std::optional<EntityId> item;
};

void cmd_predict(const PredictOptions& o, std::ostream& out) {
  if (o.pairs.empty() == !(o.user && o.item)) {
    throw ValidationError("predict needs either --pairs or both --user and --item");
  }
  const ModelBundle b = load_bundle(o.ckpt, Phase::kFinetuned);
  const auto items = load_filtered(o.graph, b.config);
  const RecContext ctx = rec_context(b, items);
  std::vector<UserItem> pairs;
  if (o.user) {
    pairs.push_back({*o.user, *o.item});
  } else {
    // Same layout as binarized interactions, labels ignored when present.
    for (const auto& r : load_interactions(o.pairs, true).records) pairs.push_back({r.user, r.item});
  }
  const auto probs = predict(b.model, ctx, pairs, b.config.train.seed);
  json list = json::array();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    list.push_back({{"user", pairs[i].user}, {"item", pairs[i].item}, {"probability", probs[i]}});
  }
  json j;
  j["command"] = "predict";
  j["predictions"] = std::move(list);
  emit(out, j);
}

}  // namespace

int run_command(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  LogScope logs(&err);
  CLI::App app{"Cross-graph multimodal alignment and recommendation engine", "kgfuse"};
  app.require_subcommand(1, 1);
  app.set_help_all_flag("--help-all", "Show help for every command");

  GenOptions gen;
  auto* g = app.add_subcommand("gen-synthetic", "Write a planted synthetic dataset");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--entities", gen.spec.entities, "Aligned entity pairs")->capture_default_str();
  g->add_option("--seed", gen.spec.seed, "Generator seed")->capture_default_str();
  g->add_option("--latent-dim", gen.spec.latent_dim)->capture_default_str();
  g->add_option("--noise", gen.spec.noise, "Feature noise stddev")->capture_default_str();
  g->add_option("--users", gen.spec.users)->capture_default_str();
  g->add_option("--text-dim", gen.spec.text_dim)->capture_default_str();
  g->add_option("--image-dim", gen.spec.image_dim)->capture_default_str();
  g->add_option("--split-seed", gen.split_seed, "Seed for the held-out splits (default: --seed)");

  PretrainOptions pre;
  auto* p = app.add_subcommand("pretrain", "Contrastive alignment pretraining");
  p->add_option("--config", pre.config, "key = value config file");
  p->add_option("--graph-a", pre.graph_a, "Graph A directory")->required();
  p->add_option("--graph-b", pre.graph_b, "Graph B directory")->required();
  p->add_option("--align", pre.align, "Aligned pairs TSV")->required();
  p->add_option("--init", pre.init, "Start from a pretrained checkpoint");
  p->add_option("--out", pre.out, "Checkpoint to write")->required();

  FinetuneOptions fin;
  auto* f = app.add_subcommand("finetune", "Recommendation fine-tuning");
  f->add_option("--config", fin.config, "Config file (default: the checkpoint's)");
  f->add_option("--ckpt", fin.ckpt, "Pretrained checkpoint")->required();
  f->add_option("--graph", fin.graph, "Item graph directory")->required();
  f->add_option("--interactions", fin.interactions, "Ratings TSV")->required();
  f->add_flag("--binarized", fin.binarized, "Interactions are user<TAB>item<TAB>y");
  f->add_option("--out", fin.out, "Checkpoint to write")->required();

  EvalAlignOptions ea;
  auto* a = app.add_subcommand("eval-align", "Alignment metrics on test pairs");
  a->add_option("--ckpt", ea.ckpt)->required();
  a->add_option("--graph-a", ea.graph_a)->required();
  a->add_option("--graph-b", ea.graph_b)->required();
  a->add_option("--align", ea.align, "Test pairs TSV")->required();
  a->add_option("--ks", ea.ks, "Cutoffs for Hits@K")->delimiter(',')->capture_default_str();

  EvalRecOptions er;
  auto* r = app.add_subcommand("eval-rec", "Recommendation metrics on held-out interactions");
  r->add_option("--ckpt", er.ckpt, "Fine-tuned checkpoint")->required();
  r->add_option("--graph", er.graph, "Item graph directory")->required();
  r->add_option("--interactions", er.interactions, "Ratings TSV")->required();
  r->add_flag("--binarized", er.binarized, "Interactions are user<TAB>item<TAB>y");
  r->add_option("--ks", er.ks, "Cutoffs for Recall@K and NDCG@K")
      ->delimiter(',')
      ->capture_default_str();

  PredictOptions pr;
  auto* d = app.add_subcommand("predict", "Interaction probabilities");
  d->add_option("--ckpt", pr.ckpt, "Fine-tuned checkpoint")->required();
  d->add_option("--graph", pr.graph, "Item graph directory")->required();
  d->add_option("--pairs", pr.pairs, "user<TAB>item lines");
  d->add_option("--user", pr.user);
  d->add_option("--item", pr.item);

  std::vector<const char*> argv{"kgfuse"};
  for (const auto& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (g->parsed()) cmd_gen(gen, out);
    if (p->parsed()) cmd_pretrain(pre, out);
    if (f->parsed()) cmd_finetune(fin, out);
    if (a->parsed()) cmd_eval_align(ea, out);
    if (r->parsed()) cmd_eval_rec(er, out);
    if (d->parsed()) cmd_predict(pr, out);
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace kgfuse
