#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "disenkgat/checkpoint.hpp"
#include "disenkgat/config.hpp"
#include "disenkgat/evaluator.hpp"
#include "disenkgat/kg_store.hpp"

namespace disenkgat {

/// Everything needed to replay a run: dataset directory, output root and the
/// training settings. Stored as flat JSON, e.g.
/// {"data": "data/toy", "out": "runs", "components": 4, "lambda": 0.01, ...}.
struct ExperimentConfig {
  std::string data_dir;
  std::string out_dir = "runs";
  TrainConfig train;
};

nlohmann::json to_json(const ExperimentConfig& config);
ExperimentConfig experiment_from_json(const nlohmann::json& j, ExperimentConfig base = {});
/// Throws ConfigError for unreadable or malformed files.
ExperimentConfig load_experiment(const std::filesystem::path& path);

/// Creates `<root>/<prefix>-YYYYmmdd-HHMMSS[-n]` and returns it.
std::filesystem::path make_run_dir(const std::filesystem::path& root, std::string_view prefix);

struct RunSummary {
  std::filesystem::path dir;
  std::size_t epochs = 0;
  bool stopped_early = false;
  RankReport valid;
  RankReport test;
  std::string digest;  // SHA-256 of best.ckpt
};

/// Trains and writes into `run_dir`: config.json, metrics.jsonl, best.ckpt,
/// last.ckpt, report.txt and report.json (best checkpoint on valid and test).
RunSummary run_experiment(const ExperimentConfig& config, const KnowledgeGraph& graph,
                          const std::filesystem::path& run_dir, bool verbose = false);

/// Named configuration variants for one sweep axis: "K", "ablation",
/// "operator" or "score-fn".
std::vector<std::pair<std::string, ExperimentConfig>> sweep_variants(std::string_view axis,
                                                                     const ExperimentConfig& base);

}  // namespace disenkgat
