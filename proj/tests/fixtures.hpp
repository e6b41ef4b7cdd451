#pragma once

#include <string>
#include <vector>

#include "disenkgat/kg_store.hpp"

namespace fixtures {

/// Builds a graph from "head rel tail" name triples; valid/test may be empty.
inline disenkgat::KnowledgeGraph graph_from(
    const std::vector<std::vector<std::string>>& train,
    const std::vector<std::vector<std::string>>& valid = {},
    const std::vector<std::vector<std::string>>& test = {}) {
  using namespace disenkgat;
  TripleSet tr;
  for (const auto& t : train) tr.triples.push_back({tr.entities.add(t[0]), tr.relations.add(t[1]), tr.entities.add(t[2])});
  TripleSet va{{}, tr.entities, tr.relations};
  TripleSet te{{}, tr.entities, tr.relations};
  for (const auto& t : valid) va.triples.push_back({*tr.entities.find(t[0]), *tr.relations.find(t[1]), *tr.entities.find(t[2])});
  for (const auto& t : test) te.triples.push_back({*tr.entities.find(t[0]), *tr.relations.find(t[1]), *tr.entities.find(t[2])});
  return KnowledgeGraph(tr, va, te);
}

/// One entity per name, in that order, and the listed triples in train only.
/// Entities without triples keep a self-loop-only neighborhood.
inline disenkgat::KnowledgeGraph graph_with_entities(
    const std::vector<std::string>& names, const std::vector<std::vector<std::string>>& triples) {
  using namespace disenkgat;
  TripleSet tr;
  for (const auto& n : names) tr.entities.add(n);
  for (const auto& t : triples) {
    tr.triples.push_back({*tr.entities.find(t[0]), tr.relations.add(t[1]), *tr.entities.find(t[2])});
  }
  TripleSet va{{}, tr.entities, tr.relations}, te{{}, tr.entities, tr.relations};
  return KnowledgeGraph(tr, va, te);
}

/// Eight entities, three relations, a few fan-out and fan-in patterns.
inline disenkgat::KnowledgeGraph small_graph() {
  return graph_from({{"a", "likes", "b"},
                     {"a", "likes", "c"},
                     {"b", "likes", "c"},
                     {"c", "near", "d"},
                     {"d", "near", "e"},
                     {"e", "owns", "f"},
                     {"g", "owns", "f"},
                     {"h", "near", "a"},
                     {"b", "owns", "g"}},
                    {{"a", "near", "d"}}, {{"h", "likes", "c"}});
}

}  // namespace fixtures

#include <random>

#include "disenkgat/tensor.hpp"

namespace fixtures {

inline disenkgat::Tensor random_tensor(disenkgat::Shape shape, std::mt19937_64& rng,
                                       double lo = -1.0, double hi = 1.0) {
  disenkgat::Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.data()) v = u(rng);
  return t;
}

}  // namespace fixtures
