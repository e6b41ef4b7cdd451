#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace disenkgat {

struct Triple {
  std::size_t head = 0;
  std::size_t relation = 0;
  std::size_t tail = 0;

  friend auto operator<=>(const Triple&, const Triple&) = default;
};

/// Bidirectional name <-> dense id map; ids follow first appearance.
class Vocab {
 public:
  std::size_t add(std::string_view name);
  std::optional<std::size_t> find(std::string_view name) const;
  const std::string& name(std::size_t id) const { return names_.at(id); }
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

  /// Up to `limit` names closest to `query` by edit distance.
  std::vector<std::string> nearest(std::string_view query, std::size_t limit = 3) const;

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.names_ == b.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> ids_;
};

struct TripleSet {
  std::vector<Triple> triples;
  Vocab entities;
  Vocab relations;

  std::size_t size() const { return triples.size(); }
};

/// Reads "head<TAB>relation<TAB>tail" lines. Without `vocab_source` the
/// vocabularies are built from the input; with it they are copied and frozen,
/// and any unseen symbol is a DataError. Duplicate triples are rejected.
TripleSet load_triples(std::istream& in, const TripleSet* vocab_source = nullptr,
                       std::string_view source_name = "<input>");
TripleSet load_triples_file(const std::filesystem::path& path,
                            const TripleSet* vocab_source = nullptr);
void write_triples(std::ostream& out, const TripleSet& set);

enum class RelationCategoryKind { OneToOne, OneToMany, ManyToOne, ManyToMany };

std::string_view to_string(RelationCategoryKind kind);

struct RelationCategory {
  std::size_t relation = 0;
  RelationCategoryKind category = RelationCategoryKind::OneToOne;
  double avg_tails_per_head = 0.0;
  double avg_heads_per_tail = 0.0;
};

inline constexpr double kCategoryThreshold = 1.5;

RelationCategoryKind categorize(double tails_per_head, double heads_per_tail,
                                double threshold = kCategoryThreshold);

/// Computes the per-head/per-tail ratios of `relation` over `train`.
/// Throws DataError when the relation has no triples.
RelationCategory classify_relation(std::size_t relation, const TripleSet& train,
                                   double threshold = kCategoryThreshold);

enum class Split { Train, Valid, Test };

std::string_view to_string(Split split);
Split parse_split(std::string_view name);

struct Edge {
  std::size_t entity = 0;    // receiving entity u
  std::size_t neighbor = 0;  // v
  std::size_t relation = 0;  // augmented relation id
};

/// A (u, r) query together with its answers.
struct LabeledQuery {
  std::size_t entity = 0;
  std::size_t relation = 0;
  std::vector<std::size_t> answers;
};

/// Train/valid/test triples over a shared vocabulary, augmented with one
/// inverse relation per original relation and a global self-loop relation.
/// Immutable after construction.
class KnowledgeGraph {
 public:
  KnowledgeGraph(TripleSet train, TripleSet valid, TripleSet test);

  static KnowledgeGraph load_directory(const std::filesystem::path& dir);

  std::size_t num_entities() const { return train_.entities.size(); }
  std::size_t num_base_relations() const { return train_.relations.size(); }
  /// 2R + 1.
  std::size_t num_relations() const { return 2 * num_base_relations() + 1; }
  std::size_t inverse_of(std::size_t relation) const;
  std::size_t self_loop() const { return 2 * num_base_relations(); }
  bool is_inverse(std::size_t relation) const {
    return relation >= num_base_relations() && relation < self_loop();
  }
  /// Original relation behind an augmented id (identity for base relations).
  std::size_t base_relation(std::size_t relation) const;

  const std::string& entity_name(std::size_t id) const { return train_.entities.name(id); }
  std::string relation_name(std::size_t relation) const;
  std::optional<std::size_t> find_relation(std::string_view name) const;
  const Vocab& entities() const { return train_.entities; }

  const TripleSet& split(Split s) const;

  /// All edges, grouped by receiving entity; each group ends with the self-loop.
  const std::vector<Edge>& edges() const { return edges_; }
  std::span<const Edge> neighborhood(std::size_t entity) const;
  /// Receiving entity of every edge, aligned with edges().
  const std::vector<std::size_t>& edge_entities() const { return edge_entity_; }
  const std::vector<std::size_t>& edge_neighbors() const { return edge_neighbor_; }
  const std::vector<std::size_t>& edge_relations() const { return edge_relation_; }

  /// (h, r, t) and (t, r_inv, h) for every triple of the split.
  std::vector<Triple> ranking_queries(Split s) const;
  /// Distinct (u, r) train queries with all their train answers, in order of
  /// first appearance.
  const std::vector<LabeledQuery>& train_queries() const { return train_queries_; }
  /// Every answer to (u, r) across train, valid and test; empty if none.
  std::span<const std::size_t> known_answers(std::size_t entity, std::size_t relation) const;

  /// Category of an original relation, or of the original behind an inverse.
  const RelationCategory& category(std::size_t relation) const;

  nlohmann::json statistics() const;

 private:
  std::uint64_t key(std::size_t entity, std::size_t relation) const {
    return static_cast<std::uint64_t>(entity) * num_relations() + relation;
  }

  TripleSet train_, valid_, test_;
  std::vector<Edge> edges_;
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> edge_entity_, edge_neighbor_, edge_relation_;
  std::vector<LabeledQuery> train_queries_;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> known_;
  std::vector<RelationCategory> categories_;
};

}  // namespace disenkgat
