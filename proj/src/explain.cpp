#include "disenkgat/explain.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "disenkgat/errors.hpp"

namespace disenkgat {

namespace {

std::string suggestion(const std::vector<std::string>& names) {
  if (names.empty()) return "";
  std::string out = "; did you mean ";
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i > 0) out += i + 1 == names.size() ? " or " : ", ";
    out += "'" + names[i] + "'";
  }
  return out + "?";
}

}  // namespace

std::size_t resolve_entity(const KnowledgeGraph& graph, const std::string& name) {
  if (auto id = graph.entities().find(name)) return *id;
  throw DataError("unknown entity '" + name + "'" + suggestion(graph.entities().nearest(name)));
}

std::size_t resolve_relation(const KnowledgeGraph& graph, const std::string& name) {
  if (auto id = graph.find_relation(name)) return *id;
  Vocab names;
  for (std::size_t r = 0; r < graph.num_relations(); ++r) names.add(graph.relation_name(r));
  throw DataError("unknown relation '" + name + "'" + suggestion(names.nearest(name)));
}

ExplanationRecord explain_entity(const FrozenModel& model, const KnowledgeGraph& graph,
                                 std::size_t entity, std::size_t top_n) {
  if (entity >= graph.num_entities()) throw std::out_of_range("explain_entity: bad entity id");
  const Tensor& attention = model.attention.back();
  const std::size_t k = model.config.encoder.components;
  const std::size_t first = static_cast<std::size_t>(graph.neighborhood(entity).data() -
                                                     graph.edges().data());
  const std::size_t size = graph.neighborhood(entity).size();

  ExplanationRecord rec;
  rec.entity = entity;
  rec.neighborhood_size = size;
  for (std::size_t c = 0; c < k; ++c) {
    ComponentExplanation comp;
    comp.component = c;
    for (std::size_t e = first; e < first + size; ++e) {
      comp.top.push_back({graph.edge_relations()[e], graph.edge_neighbors()[e], attention.at(e, c)});
    }
    std::stable_sort(comp.top.begin(), comp.top.end(),
                     [](const NeighborWeight& a, const NeighborWeight& b) { return a.weight > b.weight; });
    if (comp.top.size() > top_n) comp.top.resize(top_n);
    rec.components.push_back(std::move(comp));
  }
  return rec;
}

ExplanationRecord explain_query(const FrozenModel& model, const KnowledgeGraph& graph,
                                std::size_t entity, std::size_t relation, std::size_t top_n) {
  if (relation >= graph.num_relations()) throw std::out_of_range("explain_query: bad relation id");
  ExplanationRecord rec = explain_entity(model, graph, entity, top_n);
  rec.relation = relation;
  const Tensor beta = score_frozen(model, {entity}, {relation}).fusion;
  rec.fusion.assign(beta.data().begin(), beta.data().end());
  return rec;
}

std::string format_explanation(const ExplanationRecord& rec, const KnowledgeGraph& graph) {
  std::ostringstream out;
  out << "entity: " << graph.entity_name(rec.entity);
  if (rec.relation) out << "  relation: " << graph.relation_name(*rec.relation);
  out << "  (" << rec.neighborhood_size << " neighbors incl. self)\n";
  if (!rec.fusion.empty()) {
    std::vector<std::size_t> order(rec.fusion.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return rec.fusion[a] > rec.fusion[b]; });
    out << "fusion weights:";
    char buf[48];
    for (std::size_t c : order) {
      std::snprintf(buf, sizeof buf, "  k%zu=%.4f", c, rec.fusion[c]);
      out << buf;
    }
    out << "\n";
  }
  for (const ComponentExplanation& comp : rec.components) {
    out << "component " << comp.component << ":\n";
    for (const NeighborWeight& n : comp.top) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "  %.4f  ", n.weight);
      out << buf << graph.relation_name(n.relation) << "  " << graph.entity_name(n.neighbor) << "\n";
    }
  }
  return out.str();
}

nlohmann::json to_json(const ExplanationRecord& rec, const KnowledgeGraph& graph) {
  nlohmann::json j = {{"entity", graph.entity_name(rec.entity)},
                      {"neighborhood_size", rec.neighborhood_size}};
  if (rec.relation) j["relation"] = graph.relation_name(*rec.relation);
  nlohmann::json comps = nlohmann::json::array();
  for (const ComponentExplanation& comp : rec.components) {
    nlohmann::json top = nlohmann::json::array();
    for (const NeighborWeight& n : comp.top) {
      top.push_back({{"relation", graph.relation_name(n.relation)},
                     {"neighbor", graph.entity_name(n.neighbor)},
                     {"attention", n.weight}});
    }
    comps.push_back({{"component", comp.component}, {"top", top}});
  }
  j["components"] = comps;
  if (!rec.fusion.empty()) j["fusion"] = rec.fusion;
  return j;
}

}  // namespace disenkgat
