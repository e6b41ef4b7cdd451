#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "disenkgat/kg_store.hpp"
#include "disenkgat/model.hpp"

namespace disenkgat {

struct NeighborWeight {
  std::size_t relation = 0;  // augmented id; the self-loop for the entity itself
  std::size_t neighbor = 0;
  double weight = 0.0;       // attention in this component
};

struct ComponentExplanation {
  std::size_t component = 0;
  std::vector<NeighborWeight> top;  // sorted by weight, descending
};

/// Per-component neighbor attention of the final aggregation layer for one
/// entity, plus the fusion weights when a query relation is given.
struct ExplanationRecord {
  std::size_t entity = 0;
  std::optional<std::size_t> relation;
  std::size_t neighborhood_size = 0;  // including the self-loop
  std::vector<ComponentExplanation> components;
  std::vector<double> fusion;  // beta per component; queries only
};

ExplanationRecord explain_entity(const FrozenModel& model, const KnowledgeGraph& graph,
                                 std::size_t entity, std::size_t top_n);
ExplanationRecord explain_query(const FrozenModel& model, const KnowledgeGraph& graph,
                                std::size_t entity, std::size_t relation, std::size_t top_n);

std::string format_explanation(const ExplanationRecord& record, const KnowledgeGraph& graph);
nlohmann::json to_json(const ExplanationRecord& record, const KnowledgeGraph& graph);

/// Resolves a name or throws DataError suggesting the closest vocabulary entries.
std::size_t resolve_entity(const KnowledgeGraph& graph, const std::string& name);
std::size_t resolve_relation(const KnowledgeGraph& graph, const std::string& name);

}  // namespace disenkgat
