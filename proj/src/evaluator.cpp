#include "disenkgat/evaluator.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <sstream>

#include "disenkgat/errors.hpp"

namespace disenkgat {

TiePolicy parse_tie_policy(std::string_view name) {
  if (name == "average") return TiePolicy::Average;
  if (name == "min") return TiePolicy::Min;
  throw ConfigError("unknown tie policy '" + std::string(name) + "' (expected average or min)");
}

std::string_view to_string(TiePolicy policy) {
  return policy == TiePolicy::Average ? "average" : "min";
}

double filtered_rank(std::span<const double> scores, std::size_t target,
                     std::span<const std::size_t> known, TiePolicy policy) {
  if (target >= scores.size()) {
    throw std::out_of_range("filtered_rank: target " + std::to_string(target) + " outside " +
                            std::to_string(scores.size()) + " candidates");
  }
  const double s = scores[target];
  std::size_t greater = 0, equal = 0;
  for (std::size_t c = 0; c < scores.size(); ++c) {
    if (c == target) continue;
    if (scores[c] > s) ++greater;
    else if (scores[c] == s) ++equal;
  }
  // Known answers are few; subtract them instead of testing every candidate.
  for (std::size_t c : known) {
    if (c == target || c >= scores.size()) continue;
    if (scores[c] > s) --greater;
    else if (scores[c] == s) --equal;
  }
  double rank = 1.0 + static_cast<double>(greater);
  if (policy == TiePolicy::Average) rank += 0.5 * static_cast<double>(equal);
  return rank;
}

Metrics aggregate(std::span<const double> ranks) {
  if (ranks.empty()) throw std::invalid_argument("aggregate: no ranks");
  Metrics m;
  m.count = ranks.size();
  for (double r : ranks) {
    m.mrr += 1.0 / r;
    m.mr += r;
    m.hits1 += r <= 1.0 ? 1.0 : 0.0;
    m.hits3 += r <= 3.0 ? 1.0 : 0.0;
    m.hits10 += r <= 10.0 ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(ranks.size());
  m.mrr /= n;
  m.mr /= n;
  m.hits1 /= n;
  m.hits3 /= n;
  m.hits10 /= n;
  return m;
}

nlohmann::json to_json(const Metrics& m) {
  return {{"count", m.count}, {"mrr", m.mrr},     {"mr", m.mr},
          {"hits1", m.hits1}, {"hits3", m.hits3}, {"hits10", m.hits10}};
}

Metrics metrics_from_json(const nlohmann::json& j) {
  Metrics m;
  m.count = j.at("count").get<std::size_t>();
  m.mrr = j.at("mrr").get<double>();
  m.mr = j.at("mr").get<double>();
  m.hits1 = j.at("hits1").get<double>();
  m.hits3 = j.at("hits3").get<double>();
  m.hits10 = j.at("hits10").get<double>();
  return m;
}

RankReport evaluate(const FrozenModel& model, const KnowledgeGraph& graph, Split split,
                    const EvalOptions& options) {
  std::vector<Triple> queries = graph.ranking_queries(split);
  if (options.limit > 0 && queries.size() > options.limit) queries.resize(options.limit);
  const std::size_t n = graph.num_entities();
  const std::size_t chunk = std::max<std::size_t>(options.chunk, 1);

  RankReport report;
  report.split = split;
  report.ties = options.ties;
  report.queries.reserve(queries.size());
  for (std::size_t begin = 0; begin < queries.size(); begin += chunk) {
    const std::size_t end = std::min(begin + chunk, queries.size());
    Index heads, rels;
    for (std::size_t q = begin; q < end; ++q) {
      heads.push_back(queries[q].head);
      rels.push_back(queries[q].relation);
    }
    const Tensor fused = score_frozen(model, heads, rels).fused;
    for (std::size_t q = begin; q < end; ++q) {
      const Triple& t = queries[q];
      const std::span<const double> row(fused.data().data() + (q - begin) * n, n);
      report.queries.push_back({t.head, t.relation, t.tail,
                                filtered_rank(row, t.tail, graph.known_answers(t.head, t.relation),
                                              options.ties)});
    }
  }

  std::vector<double> all;
  std::map<std::string, std::vector<double>> grouped;
  for (const RankedQuery& q : report.queries) {
    all.push_back(q.rank);
    const std::string direction = graph.is_inverse(q.relation) ? "head" : "tail";
    const std::string category(to_string(graph.category(q.relation).category));
    grouped[direction].push_back(q.rank);
    grouped[direction + "/" + category].push_back(q.rank);
  }
  if (!all.empty()) report.overall = aggregate(all);
  for (const auto& [key, ranks] : grouped) report.slices[key] = aggregate(ranks);
  return report;
}

RankReport evaluate(const ParamSet& params, const ModelConfig& config,
                    const KnowledgeGraph& graph, Split split, const EvalOptions& options) {
  return evaluate(freeze(params, config, graph), graph, split, options);
}

std::optional<PublishedResult> published_result(std::string_view dataset) {
  std::string key(dataset);
  std::transform(key.begin(), key.end(), key.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (key == "fb15k-237") return PublishedResult{"FB15k-237", 0.368, 179, 0.275, 0.407, 0.553};
  if (key == "wn18rr") return PublishedResult{"WN18RR", 0.486, 1504, 0.441, 0.502, 0.578};
  return std::nullopt;
}

namespace {

std::string metrics_row(const std::string& label, const Metrics& m) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-14s %8zu %8.4f %10.1f %8.4f %8.4f %8.4f\n", label.c_str(),
                m.count, m.mrr, m.mr, m.hits1, m.hits3, m.hits10);
  return buf;
}

}  // namespace

std::string format_report(const RankReport& report,
                          const std::optional<PublishedResult>& reference) {
  std::ostringstream out;
  out << "split: " << to_string(report.split) << "  (filtered, ties: " << to_string(report.ties)
      << ")\n";
  char header[160];
  std::snprintf(header, sizeof header, "%-14s %8s %8s %10s %8s %8s %8s\n", "slice", "queries",
                "MRR", "MR", "Hits@1", "Hits@3", "Hits@10");
  out << header << metrics_row("all", report.overall);
  for (const auto& [key, m] : report.slices) out << metrics_row(key, m);
  if (reference) {
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "\npublished full-scale result on %s (not a target for small runs):\n"
                  "%-14s %8s %8.4f %10.1f %8.4f %8.4f %8.4f\n",
                  reference->dataset.c_str(), "reference", "-", reference->mrr, reference->mr,
                  reference->hits1, reference->hits3, reference->hits10);
    out << buf;
  }
  return out.str();
}

nlohmann::json to_json(const RankReport& report, const KnowledgeGraph& graph,
                       bool include_queries) {
  nlohmann::json j = {{"split", std::string(to_string(report.split))},
                      {"ties", std::string(to_string(report.ties))},
                      {"overall", to_json(report.overall)}};
  nlohmann::json slices = nlohmann::json::object();
  for (const auto& [key, m] : report.slices) slices[key] = to_json(m);
  j["slices"] = slices;
  if (include_queries) {
    nlohmann::json rows = nlohmann::json::array();
    for (const RankedQuery& q : report.queries) {
      rows.push_back({{"entity", graph.entity_name(q.entity)},
                      {"relation", graph.relation_name(q.relation)},
                      {"answer", graph.entity_name(q.answer)},
                      {"rank", q.rank}});
    }
    j["queries"] = rows;
  }
  return j;
}

}  // namespace disenkgat
