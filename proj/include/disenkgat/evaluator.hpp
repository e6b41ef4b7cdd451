#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "disenkgat/kg_store.hpp"
#include "disenkgat/model.hpp"

namespace disenkgat {

/// How candidates scoring exactly like the target count toward its rank.
/// Average: each tie adds 1/2 (expected rank under random tie-breaking).
/// Min: ties are ignored (optimistic).
enum class TiePolicy { Average, Min };

TiePolicy parse_tie_policy(std::string_view name);
std::string_view to_string(TiePolicy policy);

/// Rank of `target` among `scores` after removing every candidate listed in
/// `known` other than the target itself. Rank 1 is best.
double filtered_rank(std::span<const double> scores, std::size_t target,
                     std::span<const std::size_t> known, TiePolicy policy = TiePolicy::Average);

struct Metrics {
  std::size_t count = 0;
  double mrr = 0.0;
  double mr = 0.0;
  double hits1 = 0.0;
  double hits3 = 0.0;
  double hits10 = 0.0;
};

/// Throws std::invalid_argument for an empty list.
Metrics aggregate(std::span<const double> ranks);

nlohmann::json to_json(const Metrics& m);
Metrics metrics_from_json(const nlohmann::json& j);

struct RankedQuery {
  std::size_t entity = 0;
  std::size_t relation = 0;  // augmented id; inverse ids are head predictions
  std::size_t answer = 0;
  double rank = 0.0;
};

struct RankReport {
  Split split = Split::Test;
  TiePolicy ties = TiePolicy::Average;
  Metrics overall;
  // "tail", "head", and "<direction>/<category>" such as "head/1-N".
  std::map<std::string, Metrics> slices;
  std::vector<RankedQuery> queries;
};

struct EvalOptions {
  TiePolicy ties = TiePolicy::Average;
  std::size_t chunk = 256;  // queries scored per batch
  std::size_t limit = 0;    // rank only the first `limit` queries; 0 = all
};

/// Filtered link prediction over both directions of every triple in `split`.
/// An empty split yields a report with count 0 and no slices.
RankReport evaluate(const FrozenModel& model, const KnowledgeGraph& graph, Split split,
                    const EvalOptions& options = {});
RankReport evaluate(const ParamSet& params, const ModelConfig& config,
                    const KnowledgeGraph& graph, Split split, const EvalOptions& options = {});

/// Headline numbers reported for full-scale training on a public benchmark.
struct PublishedResult {
  std::string dataset;
  double mrr = 0.0;
  double mr = 0.0;
  double hits1 = 0.0;
  double hits3 = 0.0;
  double hits10 = 0.0;
};

/// Looks up a benchmark by directory name ("FB15k-237", "WN18RR"; case-insensitive).
std::optional<PublishedResult> published_result(std::string_view dataset);

/// Human-readable table: overall metrics, every slice, and the published
/// full-scale numbers side by side when `reference` is given.
std::string format_report(const RankReport& report,
                          const std::optional<PublishedResult>& reference = std::nullopt);

nlohmann::json to_json(const RankReport& report, const KnowledgeGraph& graph,
                       bool include_queries = false);

}  // namespace disenkgat
