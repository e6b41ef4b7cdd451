#include "disenkgat/experiment.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>

#include "disenkgat/errors.hpp"
#include "disenkgat/trainer.hpp"

namespace disenkgat {

nlohmann::json to_json(const ExperimentConfig& config) {
  nlohmann::json j = to_json(config.train);
  j["data"] = config.data_dir;
  j["out"] = config.out_dir;
  return j;
}

ExperimentConfig experiment_from_json(const nlohmann::json& j, ExperimentConfig base) {
  if (!j.is_object()) throw ConfigError("experiment configuration must be a JSON object");
  nlohmann::json train = j;
  try {
    if (j.contains("data")) base.data_dir = j.at("data").get<std::string>();
    if (j.contains("out")) base.out_dir = j.at("out").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("configuration paths: ") + e.what());
  }
  train.erase("data");
  train.erase("out");
  base.train = train_config_from_json(train, base.train);
  return base;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  try {
    return experiment_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::filesystem::path make_run_dir(const std::filesystem::path& root, std::string_view prefix) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  localtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
  const std::string base = std::string(prefix) + "-" + stamp;
  std::filesystem::create_directories(root);
  for (int n = 0;; ++n) {
    const auto dir = root / (n == 0 ? base : base + "-" + std::to_string(n));
    if (std::filesystem::create_directory(dir)) return dir;
  }
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

}  // namespace

RunSummary run_experiment(const ExperimentConfig& config, const KnowledgeGraph& graph,
                          const std::filesystem::path& run_dir, bool verbose) {
  std::filesystem::create_directories(run_dir);
  write_text(run_dir / "config.json", to_json(config).dump(2) + "\n");

  std::ofstream log(run_dir / "metrics.jsonl");
  if (!log) throw DataError("cannot write " + (run_dir / "metrics.jsonl").string());
  const EpochCallback on_epoch = [&](const EpochRecord& r) {
    log << to_json(r).dump() << "\n";
    log.flush();
    if (verbose) {
      std::cerr << "epoch " << r.epoch << " loss " << r.loss << " mi " << r.mi;
      if (r.valid) std::cerr << " valid MRR " << r.valid->mrr;
      std::cerr << "\n";
    }
  };
  const TrainResult result =
      train(config.train, graph, graph_meta(graph, config.data_dir), on_epoch);
  save_checkpoint(result.best, run_dir / "best.ckpt");
  save_checkpoint(result.last, run_dir / "last.ckpt");

  RunSummary summary;
  summary.dir = run_dir;
  summary.epochs = result.history.size();
  summary.stopped_early = result.stopped_early;
  summary.digest = checkpoint_digest(result.best);
  const FrozenModel model = freeze(result.best.params, config.train.model, graph);
  summary.valid = evaluate(model, graph, Split::Valid);
  summary.test = evaluate(model, graph, Split::Test);

  const auto reference =
      published_result(std::filesystem::path(config.data_dir).filename().string());
  write_text(run_dir / "report.txt",
             format_report(summary.valid) + "\n" + format_report(summary.test, reference));
  write_text(run_dir / "report.json",
             nlohmann::json{{"valid", to_json(summary.valid, graph)},
                            {"test", to_json(summary.test, graph)},
                            {"best_checkpoint_sha256", summary.digest}}
                     .dump(2) +
                 "\n");
  return summary;
}

std::vector<std::pair<std::string, ExperimentConfig>> sweep_variants(std::string_view axis,
                                                                     const ExperimentConfig& base) {
  std::vector<std::pair<std::string, ExperimentConfig>> out;
  const auto add = [&](std::string label, auto&& edit) {
    ExperimentConfig c = base;
    edit(c.train);
    out.emplace_back(std::move(label), std::move(c));
  };
  if (axis == "K") {
    for (std::size_t k = 1; k <= 5; ++k) {
      add("K" + std::to_string(k), [k](TrainConfig& t) { t.model.encoder.components = k; });
    }
  } else if (axis == "ablation") {
    add("full", [](TrainConfig&) {});
    add("no-micro", [](TrainConfig& t) { t.model.encoder.micro = false; });
    add("no-macro", [](TrainConfig& t) {
      t.macro = MacroMode::None;
      t.mi_weight = 0.0;
    });
    add("hsic", [](TrainConfig& t) { t.macro = MacroMode::Hsic; });
  } else if (axis == "operator") {
    for (CompositionOp op : {CompositionOp::Sub, CompositionOp::Mult, CompositionOp::Corr,
                             CompositionOp::Cross}) {
      add(std::string(to_string(op)), [op](TrainConfig& t) { t.model.encoder.op = op; });
    }
  } else if (axis == "score-fn") {
    for (ScoreFunction fn : {ScoreFunction::TransE, ScoreFunction::DistMult, ScoreFunction::ConvE}) {
      add(std::string(to_string(fn)), [fn](TrainConfig& t) { t.model.decoder.score = fn; });
    }
  } else {
    throw ConfigError("unknown sweep axis '" + std::string(axis) +
                      "' (expected K, ablation, operator or score-fn)");
  }
  return out;
}

}  // namespace disenkgat
