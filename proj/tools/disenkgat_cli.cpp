// Command-line front end: prep, synth, train, eval, explain, sweep.

#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "disenkgat/checkpoint.hpp"
#include "disenkgat/errors.hpp"
#include "disenkgat/evaluator.hpp"
#include "disenkgat/experiment.hpp"
#include "disenkgat/explain.hpp"
#include "disenkgat/kg_store.hpp"
#include "disenkgat/synthetic.hpp"

namespace fs = std::filesystem;
using namespace disenkgat;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

// Training flags shared by train and sweep. Only flags given on the command
// line become overrides, so they win over the config file.
struct TrainFlags {
  std::string config, data, out;
  std::size_t k = 0, layers = 0, component_dim = 0, epochs = 0, batch = 0, patience = 0;
  double lambda = 0, lr = 0, dropout = 0;
  std::string op, score, macro;
  std::uint64_t seed = 0;
  bool micro = true;
  bool verbose = false;
  std::vector<std::pair<CLI::Option*, std::function<void(nlohmann::json&)>>> set;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "JSON experiment config");
    bind(app->add_option("--data", data, "dataset directory"), "data", &data);
    bind(app->add_option("--out", out, "output root for run directories"), "out", &out);
    bind(app->add_option("--K,--components", k, "number of components"), "components", &k);
    bind(app->add_option("--layers", layers, "aggregation layers"), "layers", &layers);
    bind(app->add_option("--component-dim", component_dim, "width of each component"),
         "component_dim", &component_dim);
    bind(app->add_option("--lambda", lambda, "weight of the independence regularizer"), "lambda",
         &lambda);
    bind(app->add_option("--macro", macro, "independence regularizer: club, hsic or none"), "macro",
         &macro);
    bind(app->add_option("--operator", op, "composition: sub, mult, corr or cross"), "operator", &op);
    bind(app->add_option("--score-fn", score, "decoder: transe, distmult or conve"), "score_fn",
         &score);
    bind(app->add_option("--seed", seed, "random seed"), "seed", &seed);
    bind(app->add_option("--epochs", epochs, "training epochs"), "epochs", &epochs);
    bind(app->add_option("--batch-size", batch, "queries per batch"), "batch_size", &batch);
    bind(app->add_option("--lr", lr, "Adam learning rate"), "learning_rate", &lr);
    bind(app->add_option("--dropout", dropout, "dropout on aggregated messages"), "dropout",
         &dropout);
    bind(app->add_option("--patience", patience, "early-stopping patience (0 = off)"), "patience",
         &patience);
    bind(app->add_flag("--micro,!--no-micro", micro, "relation-aware attention per component"),
         "micro", &micro);
    app->add_flag("-v,--verbose", verbose, "log every epoch to stderr");
  }

  template <class T>
  void bind(CLI::Option* opt, const char* key, T* value) {
    set.emplace_back(opt, [key, value](nlohmann::json& j) { j[key] = *value; });
  }

  ExperimentConfig resolve() const {
    ExperimentConfig base = config.empty() ? ExperimentConfig{} : load_experiment(config);
    nlohmann::json overrides = nlohmann::json::object();
    for (const auto& [opt, apply] : set) {
      if (opt->count() > 0) apply(overrides);
    }
    ExperimentConfig out = experiment_from_json(overrides, base);
    if (out.data_dir.empty()) throw ConfigError("no dataset: pass --data or set \"data\" in the config");
    out.train.validate();
    return out;
  }
};

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

int cmd_prep(const std::string& data, std::string out) {
  const KnowledgeGraph graph = KnowledgeGraph::load_directory(data);
  if (out.empty()) out = data;
  fs::create_directories(out);
  {
    std::ofstream ents(fs::path(out) / "entities.txt");
    for (std::size_t e = 0; e < graph.num_entities(); ++e) ents << e << "\t" << graph.entity_name(e) << "\n";
    std::ofstream rels(fs::path(out) / "relations.txt");
    for (std::size_t r = 0; r < graph.num_relations(); ++r) rels << r << "\t" << graph.relation_name(r) << "\n";
  }
  const nlohmann::json stats = graph.statistics();
  write_json(fs::path(out) / "stats.json", stats);
  std::printf("dataset     %s\n", data.c_str());
  std::printf("entities    %zu\n", stats["entities"].get<std::size_t>());
  std::printf("relations   %zu (%zu with inverses and self-loop)\n",
              stats["relations"].get<std::size_t>(), stats["augmented_relations"].get<std::size_t>());
  std::printf("train       %zu\n", stats["train"].get<std::size_t>());
  std::printf("valid       %zu\n", stats["valid"].get<std::size_t>());
  std::printf("test        %zu\n", stats["test"].get<std::size_t>());
  std::printf("wrote vocab and stats.json to %s\n", out.c_str());
  return kOk;
}

int cmd_train(const TrainFlags& flags) {
  const ExperimentConfig config = flags.resolve();
  const KnowledgeGraph graph = KnowledgeGraph::load_directory(config.data_dir);
  const fs::path dir = make_run_dir(config.out_dir, "train");
  const RunSummary s = run_experiment(config, graph, dir, flags.verbose);
  std::cout << "run directory: " << s.dir.string() << "\n"
            << "epochs: " << s.epochs << (s.stopped_early ? " (stopped early)" : "") << "\n"
            << "best checkpoint sha256: " << s.digest << "\n\n"
            << format_report(s.valid) << "\n" << format_report(s.test);
  return kOk;
}

KnowledgeGraph graph_for(const Checkpoint& ckpt, const std::string& data) {
  std::string dir = data;
  if (dir.empty()) dir = ckpt.meta.value("data_dir", std::string{});
  if (dir.empty()) throw ConfigError("checkpoint does not name its dataset; pass --data");
  KnowledgeGraph graph = KnowledgeGraph::load_directory(dir);
  check_compatible(ckpt, graph);
  return graph;
}

int cmd_eval(const std::string& path, const std::string& split, const std::string& data,
             const std::string& ties, const std::string& json_out) {
  const Checkpoint ckpt = load_checkpoint(path);
  const KnowledgeGraph graph = graph_for(ckpt, data);
  EvalOptions options;
  options.ties = parse_tie_policy(ties);
  const RankReport report =
      evaluate(ckpt.params, ckpt.config.model, graph, parse_split(split), options);
  const std::string dataset =
      fs::path(ckpt.meta.value("data_dir", data)).filename().string();
  std::cout << format_report(report, published_result(dataset));
  if (!json_out.empty()) write_json(json_out, to_json(report, graph, true));
  return kOk;
}

int cmd_explain(const std::string& path, const std::string& entity,
                const std::vector<std::string>& query, std::size_t top_n, const std::string& data,
                const std::string& json_out) {
  const Checkpoint ckpt = load_checkpoint(path);
  const KnowledgeGraph graph = graph_for(ckpt, data);
  const FrozenModel model = freeze(ckpt.params, ckpt.config.model, graph);
  const ExplanationRecord rec =
      query.empty()
          ? explain_entity(model, graph, resolve_entity(graph, entity), top_n)
          : explain_query(model, graph, resolve_entity(graph, query[0]),
                          resolve_relation(graph, query[1]), top_n);
  std::cout << format_explanation(rec, graph);
  if (!json_out.empty()) write_json(json_out, to_json(rec, graph));
  return kOk;
}

int cmd_sweep(const TrainFlags& flags, const std::string& axis, std::size_t workers) {
  const ExperimentConfig base = flags.resolve();
  const auto variants = sweep_variants(axis, base);
  const KnowledgeGraph graph = KnowledgeGraph::load_directory(base.data_dir);
  const fs::path root = make_run_dir(base.out_dir, "sweep-" + axis);

  std::vector<RunSummary> results(variants.size());
  std::vector<std::exception_ptr> errors(variants.size());
  std::atomic<std::size_t> next{0};
  std::mutex print;
  const auto work = [&] {
    for (std::size_t i = next++; i < variants.size(); i = next++) {
      try {
        results[i] = run_experiment(variants[i].second, graph, root / variants[i].first, false);
        std::lock_guard lock(print);
        std::cerr << "finished " << variants[i].first << "\n";
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < std::max<std::size_t>(workers, 1); ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  nlohmann::json summary = nlohmann::json::array();
  std::printf("%-10s %10s %10s %10s %10s\n", "variant", "valid MRR", "test MRR", "test MR",
              "test H@10");
  for (std::size_t i = 0; i < variants.size(); ++i) {
    const RunSummary& s = results[i];
    std::printf("%-10s %10.4f %10.4f %10.1f %10.4f\n", variants[i].first.c_str(),
                s.valid.overall.mrr, s.test.overall.mrr, s.test.overall.mr, s.test.overall.hits10);
    summary.push_back({{"variant", variants[i].first},
                       {"dir", s.dir.string()},
                       {"valid", to_json(s.valid.overall)},
                       {"test", to_json(s.test.overall)}});
  }
  write_json(root / "sweep.json", summary);
  std::printf("results in %s\n", root.string().c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Disentangled knowledge-graph attention network toolkit"};
  app.require_subcommand(1);

  std::string data, out;
  auto* prep = app.add_subcommand("prep", "load a dataset and write vocabulary and statistics");
  prep->add_option("--data", data, "directory with train.txt, valid.txt, test.txt")->required();
  prep->add_option("--out", out, "output directory (default: the dataset directory)");

  PlantedTopicSpec spec;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "write a planted-topic toy dataset");
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--entities", spec.entities, "number of entities");
  synth->add_option("--topics", spec.topics, "number of topics");
  synth->add_option("--triples", spec.train, "number of train triples");
  synth->add_option("--seed", spec.seed, "random seed");

  TrainFlags train_flags;
  auto* train = app.add_subcommand("train", "train a model into a new run directory");
  train_flags.attach(train);

  std::string ckpt, split = "test", ties = "average", json_out;
  auto* eval = app.add_subcommand("eval", "filtered link-prediction metrics of a checkpoint");
  eval->add_option("--checkpoint", ckpt, "checkpoint file")->required();
  eval->add_option("--split", split, "valid or test")->check(CLI::IsMember({"valid", "test", "train"}));
  eval->add_option("--data", data, "dataset directory (default: the one used in training)");
  eval->add_option("--ties", ties, "tie policy: average or min")->check(CLI::IsMember({"average", "min"}));
  eval->add_option("--json", json_out, "also write per-query ranks and metrics as JSON");

  std::string entity;
  std::vector<std::string> query;
  std::size_t top_n = 5;
  auto* explain = app.add_subcommand("explain", "per-component neighbor attention and fusion weights");
  explain->add_option("--checkpoint", ckpt, "checkpoint file")->required();
  auto* entity_opt = explain->add_option("--entity", entity, "entity name");
  auto* query_opt = explain->add_option("--query", query, "head entity and relation names")->expected(2);
  entity_opt->excludes(query_opt);
  explain->add_option("--top-n", top_n, "neighbors listed per component");
  explain->add_option("--data", data, "dataset directory (default: the one used in training)");
  explain->add_option("--json", json_out, "also write the record as JSON");

  TrainFlags sweep_flags;
  std::string axis;
  std::size_t workers = 1;
  auto* sweep = app.add_subcommand("sweep", "train one run per value of an axis");
  sweep_flags.attach(sweep);
  sweep->add_option("--axis", axis, "K, ablation, operator or score-fn")
      ->required()
      ->check(CLI::IsMember({"K", "ablation", "operator", "score-fn"}));
  sweep->add_option("--workers", workers, "runs trained in parallel");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*prep) return cmd_prep(data, out);
    if (*synth) {
      write_planted_topic_graph(planted_topic_graph(spec), synth_out);
      std::cout << "wrote planted-topic dataset to " << synth_out << "\n";
      return kOk;
    }
    if (*train) return cmd_train(train_flags);
    if (*eval) return cmd_eval(ckpt, split, data, ties, json_out);
    if (*explain) {
      if (entity.empty() && query.empty()) throw ConfigError("explain needs --entity or --query");
      return cmd_explain(ckpt, entity, query, top_n, data, json_out);
    }
    if (*sweep) return cmd_sweep(sweep_flags, axis, workers);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
