#include "disenkgat/synthetic.hpp"

#include <fstream>
#include <optional>
#include <random>
#include <set>
#include <string>

#include "disenkgat/errors.hpp"

namespace disenkgat {

PlantedTopicGraph planted_topic_graph(const PlantedTopicSpec& spec) {
  if (spec.topics == 0 || spec.relations_per_topic == 0 || spec.topics_per_entity == 0 ||
      spec.topics_per_entity > spec.topics) {
    throw ConfigError("planted topic graph: inconsistent topic counts");
  }
  if (spec.entities < 2 * spec.topics) {
    throw ConfigError("planted topic graph: need at least two entities per topic");
  }
  PlantedTopicGraph g;
  Vocab entities, relations;
  for (std::size_t e = 0; e < spec.entities; ++e) entities.add("e" + std::to_string(e));
  for (std::size_t t = 0; t < spec.topics; ++t) {
    for (std::size_t r = 0; r < spec.relations_per_topic; ++r) {
      relations.add("topic" + std::to_string(t) + "_rel" + std::to_string(r));
      g.relation_topic.push_back(t);
    }
  }

  // Balanced membership: entity e joins topic e mod T, then topics at a
  // rotating offset so that every pair of topics shares some members.
  std::vector<std::vector<std::size_t>> members(spec.topics);
  g.entity_topics.resize(spec.entities);
  for (std::size_t e = 0; e < spec.entities; ++e) {
    std::set<std::size_t> mine{e % spec.topics};
    std::size_t step = 1 + (e / spec.topics) % std::max<std::size_t>(spec.topics - 1, 1);
    for (std::size_t t = (e + step) % spec.topics; mine.size() < spec.topics_per_entity;
         t = (t + 1) % spec.topics) {
      mine.insert(t);
    }
    for (std::size_t t : mine) {
      g.entity_topics[e].push_back(t);
      members[t].push_back(e);
    }
  }

  std::size_t capacity = 0;
  for (std::size_t t = 0; t < spec.topics; ++t) {
    capacity += spec.relations_per_topic * members[t].size() * (members[t].size() - 1);
  }
  const std::size_t wanted = spec.train + spec.valid + spec.test;
  if (wanted > capacity / 2) {
    throw ConfigError("planted topic graph: " + std::to_string(wanted) +
                      " triples requested but only " + std::to_string(capacity) + " possible");
  }

  std::mt19937_64 rng(spec.seed);
  std::set<Triple> seen;
  std::vector<Triple> drawn;
  std::vector<bool> entity_used(spec.entities, false), relation_used(relations.size(), false);
  const auto draw = [&](std::size_t r, std::optional<std::size_t> head) {
    const auto& pool = members[g.relation_topic[r]];
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    const std::size_t h = head ? *head : pool[pick(rng)], t = pool[pick(rng)];
    if (h == t || !seen.insert(Triple{h, r, t}).second) return false;
    drawn.push_back({h, r, t});
    entity_used[h] = entity_used[t] = relation_used[r] = true;
    return true;
  };
  // Every entity and relation must occur in train, so cover them first.
  for (std::size_t r = 0; r < relations.size(); ++r) {
    while (!relation_used[r]) draw(r, std::nullopt);
  }
  for (std::size_t e = 0; e < spec.entities; ++e) {
    const auto& mine = g.entity_topics[e];
    while (!entity_used[e]) {
      const std::size_t topic = mine[std::uniform_int_distribution<std::size_t>(0, mine.size() - 1)(rng)];
      const std::size_t r = topic * spec.relations_per_topic +
                            std::uniform_int_distribution<std::size_t>(0, spec.relations_per_topic - 1)(rng);
      draw(r, e);
    }
  }
  if (drawn.size() > spec.train) {
    throw ConfigError("planted topic graph: " + std::to_string(spec.train) +
                      " train triples cannot cover every entity and relation");
  }
  while (drawn.size() < wanted) {
    draw(std::uniform_int_distribution<std::size_t>(0, relations.size() - 1)(rng), std::nullopt);
  }
  for (TripleSet* s : {&g.train, &g.valid, &g.test}) {
    s->entities = entities;
    s->relations = relations;
  }
  g.train.triples.assign(drawn.begin(), drawn.begin() + static_cast<std::ptrdiff_t>(spec.train));
  g.valid.triples.assign(drawn.begin() + static_cast<std::ptrdiff_t>(spec.train),
                         drawn.begin() + static_cast<std::ptrdiff_t>(spec.train + spec.valid));
  g.test.triples.assign(drawn.begin() + static_cast<std::ptrdiff_t>(spec.train + spec.valid),
                        drawn.end());
  return g;
}

void write_planted_topic_graph(const PlantedTopicGraph& g, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto write = [&](const char* name, const TripleSet& set) {
    std::ofstream out(dir / name);
    if (!out) throw DataError("cannot write " + (dir / name).string());
    write_triples(out, set);
  };
  write("train.txt", g.train);
  write("valid.txt", g.valid);
  write("test.txt", g.test);
  std::ofstream topics(dir / "topics.tsv");
  topics << "kind\tname\ttopics\n";
  for (std::size_t r = 0; r < g.relation_topic.size(); ++r) {
    topics << "relation\t" << g.train.relations.name(r) << "\t" << g.relation_topic[r] << "\n";
  }
  for (std::size_t e = 0; e < g.entity_topics.size(); ++e) {
    topics << "entity\t" << g.train.entities.name(e) << "\t";
    for (std::size_t i = 0; i < g.entity_topics[e].size(); ++i) {
      topics << (i ? "," : "") << g.entity_topics[e][i];
    }
    topics << "\n";
  }
}

}  // namespace disenkgat
