// ckgr: command-line front end for the reasoning engine.
//
//   ckgr stats   --train F --test F
//   ckgr train   --train F [--dev F] [--queries F] (--embeddings F | --hash-dim N) --out CKPT
//   ckgr infer   --checkpoint CKPT --graph F (--embeddings F | --hash-dim N) --query "rel<TAB>head" ...
//   ckgr eval    --checkpoint CKPT --train F --test F (--embeddings F | --hash-dim N) [--unseen-only]
//   ckgr explain PROOF_FILE
//
// Every run prints its effective config to stderr. Errors print one line
// starting with "error:" and exit with 1 (usage), 2 (data) or 3 (numerical).

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ckgr/config.hpp"
#include "ckgr/embedding.hpp"
#include "ckgr/errors.hpp"
#include "ckgr/evaluation.hpp"
#include "ckgr/kg_store.hpp"
#include "ckgr/knn.hpp"
#include "ckgr/reasoner.hpp"
#include "ckgr/relation_predictor.hpp"
#include "ckgr/trainer.hpp"

namespace {

using namespace ckgr;

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
};

struct EmbeddingSource {
  std::string path;
  std::size_t hash_dim = 0;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "config file (key = value lines)");
  cmd->add_option("--set", o.sets, "override one config key, key=value")->take_all();
  cmd->add_option("--seed", o.seed, "shorthand for --set seed=N");
  cmd->add_option("--threads", o.threads, "query-level parallelism")->check(CLI::PositiveNumber);
}

void add_embeddings(CLI::App* cmd, EmbeddingSource& e) {
  auto* file = cmd->add_option("--embeddings", e.path, "embedding file");
  auto* hash = cmd->add_option("--hash-dim", e.hash_dim, "use hash embeddings of this dimension instead");
  file->excludes(hash);
}

ReasonerConfig effective_config(const CommonOptions& o) {
  std::vector<std::pair<std::string, std::string>> overrides;
  for (const std::string& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got \"" + s + "\"");
    auto trim = [](std::string v) {
      const auto b = v.find_first_not_of(" \t");
      const auto e = v.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : v.substr(b, e - b + 1);
    };
    overrides.emplace_back(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
  }
  if (o.seed) overrides.emplace_back("seed", std::to_string(*o.seed));
  std::filesystem::path file(o.config_path);
  ReasonerConfig cfg = resolve_config(o.config_path.empty() ? nullptr : &file, overrides);
  cfg.validate();
  std::istringstream lines(cfg.render());
  std::cerr << "# effective config\n";
  for (std::string line; std::getline(lines, line);) std::cerr << "# " << line << "\n";
  return cfg;
}

EmbeddingTable prepare_embeddings(const EmbeddingSource& e, Vocabulary& vocab, std::size_t required_below,
                                  std::uint64_t seed) {
  if (e.hash_dim > 0) return hash_embed(vocab, e.hash_dim, seed);
  if (e.path.empty()) throw UsageError("one of --embeddings or --hash-dim is required");
  EmbeddingLoadOptions options;
  options.extend_vocabulary = true;
  options.require_nodes_below = required_below;
  return load_embeddings(e.path, vocab, options);
}

KnnOptions knn_options(const ReasonerConfig& cfg) {
  KnnOptions o;
  o.mode = cfg.knn_mode;
  o.clusters = cfg.knn_clusters;
  o.probes = cfg.knn_probes;
  o.seed = cfg.seed;
  return o;
}

// Triples whose relation the graph knows; the rest are dropped with a notice.
std::vector<Triple> known_relation_triples(const Ckg& extra, const RelationTable& relations, const char* what) {
  std::vector<Triple> out;
  std::size_t dropped = 0;
  for (const Triple& t : extra.triples()) {
    if (t.relation < relations.forward_count()) out.push_back(t);
    else ++dropped;
  }
  if (dropped > 0) std::cerr << "warning: " << dropped << " " << what << " triples use relations absent from training\n";
  return out;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string general(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

int run_stats(const std::string& train_path, const std::string& test_path) {
  auto vocab = std::make_shared<Vocabulary>();
  const Ckg train = load_triples(train_path, vocab);
  const Ckg test = load_triples(test_path, vocab);
  std::cout << format_stats(compute_stats(train, test));
  return 0;
}

struct TrainArgs {
  std::string train, dev, queries, out;
};

int run_train(const CommonOptions& common, const EmbeddingSource& emb, const TrainArgs& a) {
  const ReasonerConfig cfg = effective_config(common);
  auto vocab = std::make_shared<Vocabulary>();
  const Ckg base = load_triples(a.train, vocab);
  const Ckg graph = add_inverse_relations(base);
  std::optional<Ckg> dev_file, query_file;
  if (!a.dev.empty()) dev_file.emplace(load_triples(a.dev, vocab));
  if (!a.queries.empty()) query_file.emplace(load_triples(a.queries, vocab));

  const EmbeddingTable table = prepare_embeddings(emb, *vocab, vocab->node_count(), cfg.seed);
  const auto& relations = graph.relations();
  const std::vector<Triple> train =
      query_file ? known_relation_triples(*query_file, relations, "query") : forward_triples(graph);
  const std::vector<Triple> dev = dev_file ? known_relation_triples(*dev_file, relations, "dev") : std::vector<Triple>{};

  TrainInputs inputs{&graph, &table, train, dev};
  TrainResult result = train_reasoner(inputs, cfg, [](const EpochDiagnostics& d) {
    std::cout << "epoch " << d.epoch << "\ttrain_loss " << fixed(d.train_loss, 6) << "\tdev_loss "
              << fixed(d.dev_loss, 6) << "\tpredictor_loss " << fixed(d.predictor_loss, 6) << "\tlr "
              << general(d.learning_rate) << "\texamples " << d.examples << "\n";
  });
  std::cout << "initial_dev_loss " << fixed(result.initial_dev_loss, 6) << "\n";
  save_checkpoint(a.out, Checkpoint{std::move(result.params), std::move(result.adapter)});
  std::cout << "checkpoint " << a.out << "\n";
  return 0;
}

// Everything inference and evaluation share once files are loaded.
struct LoadedModel {
  std::shared_ptr<Vocabulary> vocab;
  std::optional<Ckg> graph;
  EmbeddingTable table;
  std::unique_ptr<KnnIndex> index;
  Checkpoint checkpoint;
};

LoadedModel load_model(const ReasonerConfig& cfg, const EmbeddingSource& emb, const std::string& checkpoint_path,
                       const std::string& graph_path, const std::string& extra_path, std::optional<Ckg>& extra) {
  LoadedModel m;
  m.vocab = std::make_shared<Vocabulary>();
  const Ckg base = load_triples(graph_path, m.vocab);
  m.graph.emplace(add_inverse_relations(base));
  if (!extra_path.empty()) extra.emplace(load_triples(extra_path, m.vocab));
  m.checkpoint = load_checkpoint(checkpoint_path);
  m.table = prepare_embeddings(emb, *m.vocab, m.vocab->node_count(), cfg.seed);
  if (m.checkpoint.adapter) m.table = apply_adapter(m.table, *m.checkpoint.adapter);
  m.index = std::make_unique<KnnIndex>(m.table, knn_options(cfg));
  return m;
}

struct InferArgs {
  std::string checkpoint, graph, save_proofs;
  std::vector<std::string> queries;
  bool explain = false;
};

int run_infer(const CommonOptions& common, const EmbeddingSource& emb, const InferArgs& a) {
  const ReasonerConfig cfg = effective_config(common);
  std::optional<Ckg> none;
  LoadedModel m = load_model(cfg, emb, a.checkpoint, a.graph, "", none);
  const Ckg& g = *m.graph;
  Reasoner reasoner(g, m.table, *m.index, m.checkpoint.predictor, cfg);

  std::vector<Query> queries;
  for (const std::string& text : a.queries) {
    const auto tab = text.find('\t');
    if (tab == std::string::npos) throw UsageError("query must be \"relation<TAB>head\", got \"" + text + "\"");
    const std::string rel = text.substr(0, tab);
    const std::string head = text.substr(tab + 1);
    const auto r = g.relations().find(rel);
    if (!r) {
      std::string valid;
      for (RelationId i = 0; i < g.relations().size(); ++i) valid += (i ? ", " : "") + g.relations().display_name(i);
      throw LookupError("unknown relation \"" + rel + "\"; valid relations: " + valid);
    }
    const auto h = m.vocab->find_node(head);
    if (!h || !m.table.has(*h)) throw LookupError("query head has no embedding: \"" + head + "\"");
    queries.push_back(Query{*r, *h});
  }

  std::ofstream proofs;
  if (!a.save_proofs.empty()) {
    proofs.open(a.save_proofs, std::ios::binary);
    if (!proofs) throw LookupError("cannot write proof file " + a.save_proofs);
  }
  for (const Query& q : queries) {
    const auto answers = reasoner.answer(q);
    for (std::size_t i = 0; i < answers.size(); ++i) {
      std::cout << format_answer_line(i + 1, g, answers[i]) << "\n";
      if (a.explain) {
        std::istringstream lines(explain(g, answers[i]));
        for (std::string line; std::getline(lines, line);) std::cout << "    " << line << "\n";
      }
      if (proofs) proofs << format_proof_record(to_record(g, answers[i]));
    }
  }
  return 0;
}

struct EvalArgs {
  std::string checkpoint, train, test;
  bool unseen_only = false;
  bool tsv = false;
};

int run_eval(const CommonOptions& common, const EmbeddingSource& emb, const EvalArgs& a) {
  const ReasonerConfig cfg = effective_config(common);
  std::optional<Ckg> test_graph;
  LoadedModel m = load_model(cfg, emb, a.checkpoint, a.train, a.test, test_graph);
  const Ckg& g = *m.graph;
  std::vector<Triple> test(test_graph->triples().begin(), test_graph->triples().end());
  if (a.unseen_only) {
    const Ckg base(m.vocab, forward_triples(g));
    test = carve_unseen_split(base, test);
  }
  if (test.empty()) {
    std::cout << "0 triples evaluated\n";
    return 0;
  }
  KnownFacts known(g.relations());
  const auto train_forward = forward_triples(g);
  known.add_all(train_forward);
  for (const Triple& t : test_graph->triples()) {
    if (t.relation < g.relations().forward_count()) known.add(t);
  }
  Reasoner reasoner(g, m.table, *m.index, m.checkpoint.predictor, cfg);
  ReasonerScorer scorer(reasoner);
  const EvalReport report = evaluate(scorer, test, g.relations(), known,
                                     EvalOptions{m.vocab->node_count(), common.threads});
  std::cout << format_report(report, a.tsv);
  return 0;
}

int run_explain(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LookupError("cannot open proof file " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  const auto records = parse_proof_file(buffer.str(), path);
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (i) std::cout << "\n";
    std::cout << explain(records[i]);
  }
  return 0;
}

int fail(const std::string& message, int code) {
  std::string line = message;
  for (char& c : line) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  std::cout.flush();
  std::cerr << "error: " << line << std::endl;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural-symbolic link prediction over commonsense knowledge graphs"};
  app.require_subcommand(1);

  CommonOptions common;
  EmbeddingSource emb;

  std::string stats_train, stats_test;
  auto* stats = app.add_subcommand("stats", "dataset statistics");
  stats->add_option("--train", stats_train)->required();
  stats->add_option("--test", stats_test)->required();

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "train the relation predictor");
  train->add_option("--train", train_args.train, "search graph triples")->required();
  train->add_option("--dev", train_args.dev, "dev triples for the per-epoch dev loss");
  train->add_option("--queries", train_args.queries, "training query triples (default: the graph itself)");
  train->add_option("--out", train_args.out, "checkpoint to write")->required();
  add_embeddings(train, emb);
  add_common(train, common);

  InferArgs infer_args;
  auto* infer = app.add_subcommand("infer", "answer queries");
  infer->add_option("--checkpoint", infer_args.checkpoint)->required();
  infer->add_option("--graph", infer_args.graph)->required();
  infer->add_option("--query", infer_args.queries, "relation<TAB>head text")->required();
  infer->add_flag("--explain", infer_args.explain, "print the full proof under each answer");
  infer->add_option("--save-proofs", infer_args.save_proofs, "write proof records for the explain command");
  add_embeddings(infer, emb);
  add_common(infer, common);

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "filtered ranking metrics");
  eval->add_option("--checkpoint", eval_args.checkpoint)->required();
  eval->add_option("--train", eval_args.train)->required();
  eval->add_option("--test", eval_args.test)->required();
  eval->add_flag("--unseen-only", eval_args.unseen_only, "only test triples with an endpoint unseen in training");
  eval->add_flag("--tsv", eval_args.tsv, "key<TAB>value output");
  add_embeddings(eval, emb);
  add_common(eval, common);

  std::string proof_path;
  auto* explain_cmd = app.add_subcommand("explain", "re-render a saved proof file");
  explain_cmd->add_option("proofs", proof_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(e.what(), 1);
  }

  try {
    if (*stats) return run_stats(stats_train, stats_test);
    if (*train) return run_train(common, emb, train_args);
    if (*infer) return run_infer(common, emb, infer_args);
    if (*eval) return run_eval(common, emb, eval_args);
    if (*explain_cmd) return run_explain(proof_path);
  } catch (const Error& e) {
    return fail(e.what(), static_cast<int>(e.error_class()));
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(e.what(), 2);
  } catch (const std::exception& e) {
    return fail(e.what(), 2);
  }
  return 1;
}
