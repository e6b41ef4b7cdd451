#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "disenkgat/kg_store.hpp"

namespace disenkgat {

/// Planted-topic graph: every relation belongs to one topic, every entity to
/// `topics_per_entity` topics, and each triple links two members of its
/// relation's topic.
struct PlantedTopicSpec {
  std::size_t entities = 50;
  std::size_t topics = 4;
  std::size_t relations_per_topic = 2;
  std::size_t topics_per_entity = 2;
  std::size_t train = 300;
  std::size_t valid = 30;
  std::size_t test = 30;
  std::uint64_t seed = 7;
};

struct PlantedTopicGraph {
  TripleSet train, valid, test;  // one shared vocabulary
  std::vector<std::size_t> relation_topic;             // per base relation
  std::vector<std::vector<std::size_t>> entity_topics;  // per entity
};

/// Throws ConfigError when the requested triple counts cannot be drawn
/// without duplicates.
PlantedTopicGraph planted_topic_graph(const PlantedTopicSpec& spec);

/// Writes train.txt, valid.txt, test.txt and topics.tsv into `dir`.
void write_planted_topic_graph(const PlantedTopicGraph& graph, const std::filesystem::path& dir);

}  // namespace disenkgat
