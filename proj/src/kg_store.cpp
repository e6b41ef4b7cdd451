#include "disenkgat/kg_store.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <unordered_set>

#include "disenkgat/errors.hpp"

namespace disenkgat {

std::size_t Vocab::add(std::string_view name) {
  auto [it, inserted] = ids_.try_emplace(std::string(name), names_.size());
  if (inserted) names_.emplace_back(name);
  return it->second;
}

std::optional<std::size_t> Vocab::find(std::string_view name) const {
  auto it = ids_.find(std::string(name));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

namespace {

std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

std::vector<std::string> Vocab::nearest(std::string_view query, std::size_t limit) const {
  std::vector<std::pair<std::size_t, std::size_t>> scored;
  scored.reserve(names_.size());
  for (std::size_t i = 0; i < names_.size(); ++i) {
    scored.emplace_back(edit_distance(query, names_[i]), i);
  }
  const std::size_t n = std::min(limit, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end());
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(names_[scored[i].second]);
  return out;
}

TripleSet load_triples(std::istream& in, const TripleSet* vocab_source,
                       std::string_view source_name) {
  TripleSet set;
  if (vocab_source) {
    set.entities = vocab_source->entities;
    set.relations = vocab_source->relations;
  }
  std::set<Triple> seen;
  std::string line;
  std::size_t line_no = 0;
  auto lookup = [&](Vocab& vocab, std::string_view name, std::string_view what) {
    if (!vocab_source) return vocab.add(name);
    if (auto id = vocab.find(name)) return *id;
    throw DataError(std::string(source_name) + ":" + std::to_string(line_no) + ": unseen " +
                    std::string(what) + " '" + std::string(name) + "'");
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t t1 = line.find('\t');
    const std::size_t t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos ||
        line.find('\t', t2 + 1) != std::string::npos || t1 == 0 || t2 == t1 + 1 ||
        t2 + 1 == line.size()) {
      throw DataError(std::string(source_name) + ":" + std::to_string(line_no) +
                      ": expected three tab-separated fields");
    }
    const std::string_view view(line);
    Triple t;
    t.head = lookup(set.entities, view.substr(0, t1), "entity");
    t.relation = lookup(set.relations, view.substr(t1 + 1, t2 - t1 - 1), "relation");
    t.tail = lookup(set.entities, view.substr(t2 + 1), "entity");
    if (!seen.insert(t).second) {
      throw DataError(std::string(source_name) + ":" + std::to_string(line_no) +
                      ": duplicate triple");
    }
    set.triples.push_back(t);
  }
  return set;
}

TripleSet load_triples_file(const std::filesystem::path& path, const TripleSet* vocab_source) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return load_triples(in, vocab_source, path.string());
}

void write_triples(std::ostream& out, const TripleSet& set) {
  for (const Triple& t : set.triples) {
    out << set.entities.name(t.head) << '\t' << set.relations.name(t.relation) << '\t'
        << set.entities.name(t.tail) << '\n';
  }
}

std::string_view to_string(RelationCategoryKind kind) {
  switch (kind) {
    case RelationCategoryKind::OneToOne: return "1-1";
    case RelationCategoryKind::OneToMany: return "1-N";
    case RelationCategoryKind::ManyToOne: return "N-1";
    case RelationCategoryKind::ManyToMany: return "N-N";
  }
  return "?";
}

RelationCategoryKind categorize(double tails_per_head, double heads_per_tail, double threshold) {
  const bool many_tails = tails_per_head >= threshold;
  const bool many_heads = heads_per_tail >= threshold;
  if (many_tails && many_heads) return RelationCategoryKind::ManyToMany;
  if (many_tails) return RelationCategoryKind::OneToMany;
  if (many_heads) return RelationCategoryKind::ManyToOne;
  return RelationCategoryKind::OneToOne;
}

RelationCategory classify_relation(std::size_t relation, const TripleSet& train,
                                   double threshold) {
  std::unordered_set<std::size_t> heads, tails;
  std::size_t count = 0;
  for (const Triple& t : train.triples) {
    if (t.relation != relation) continue;
    ++count;
    heads.insert(t.head);
    tails.insert(t.tail);
  }
  if (count == 0) {
    throw DataError("relation " + std::to_string(relation) + " has no training triples");
  }
  RelationCategory c;
  c.relation = relation;
  c.avg_tails_per_head = static_cast<double>(count) / static_cast<double>(heads.size());
  c.avg_heads_per_tail = static_cast<double>(count) / static_cast<double>(tails.size());
  c.category = categorize(c.avg_tails_per_head, c.avg_heads_per_tail, threshold);
  return c;
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Valid: return "valid";
    case Split::Test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "valid") return Split::Valid;
  if (name == "test") return Split::Test;
  throw ConfigError("unknown split '" + std::string(name) + "'");
}

KnowledgeGraph::KnowledgeGraph(TripleSet train, TripleSet valid, TripleSet test)
    : train_(std::move(train)), valid_(std::move(valid)), test_(std::move(test)) {
  if (!(valid_.entities == train_.entities && valid_.relations == train_.relations &&
        test_.entities == train_.entities && test_.relations == train_.relations)) {
    throw DataError("train/valid/test do not share one vocabulary");
  }
  const std::size_t n = num_entities();

  // CSR adjacency from train only: (h, r, t) puts (t, r) in N(h) and
  // (h, r_inv) in N(t); every entity also gets its self-loop.
  std::vector<std::vector<Edge>> adj(n);
  for (const Triple& t : train_.triples) {
    adj[t.head].push_back({t.head, t.tail, t.relation});
    adj[t.tail].push_back({t.tail, t.head, inverse_of(t.relation)});
  }
  offsets_.assign(n + 1, 0);
  for (std::size_t u = 0; u < n; ++u) {
    adj[u].push_back({u, u, self_loop()});
    offsets_[u + 1] = offsets_[u] + adj[u].size();
    edges_.insert(edges_.end(), adj[u].begin(), adj[u].end());
  }
  for (const Edge& e : edges_) {
    edge_entity_.push_back(e.entity);
    edge_neighbor_.push_back(e.neighbor);
    edge_relation_.push_back(e.relation);
  }

  std::unordered_map<std::uint64_t, std::size_t> query_index;
  for (const Triple& q : ranking_queries(Split::Train)) {
    auto [it, inserted] = query_index.try_emplace(key(q.head, q.relation), train_queries_.size());
    if (inserted) train_queries_.push_back({q.head, q.relation, {}});
    train_queries_[it->second].answers.push_back(q.tail);
  }
  for (Split s : {Split::Train, Split::Valid, Split::Test}) {
    for (const Triple& q : ranking_queries(s)) known_[key(q.head, q.relation)].push_back(q.tail);
  }
  for (auto& [k, answers] : known_) {
    std::sort(answers.begin(), answers.end());
    answers.erase(std::unique(answers.begin(), answers.end()), answers.end());
  }

  for (std::size_t r = 0; r < num_base_relations(); ++r) {
    categories_.push_back(classify_relation(r, train_));
  }
}

KnowledgeGraph KnowledgeGraph::load_directory(const std::filesystem::path& dir) {
  TripleSet train = load_triples_file(dir / "train.txt");
  // The entity vocabulary covers every split, so entities seen only in valid
  // or test still get an id (and a self-loop-only neighborhood). Relations
  // must occur in train.
  for (const char* name : {"valid.txt", "test.txt"}) {
    const TripleSet names = load_triples_file(dir / name);
    for (const std::string& e : names.entities.names()) train.entities.add(e);
  }
  TripleSet valid = load_triples_file(dir / "valid.txt", &train);
  TripleSet test = load_triples_file(dir / "test.txt", &train);
  return KnowledgeGraph(std::move(train), std::move(valid), std::move(test));
}

std::size_t KnowledgeGraph::inverse_of(std::size_t relation) const {
  const std::size_t r = num_base_relations();
  if (relation < r) return relation + r;
  if (relation < 2 * r) return relation - r;
  return relation;
}

std::size_t KnowledgeGraph::base_relation(std::size_t relation) const {
  return is_inverse(relation) ? relation - num_base_relations() : relation;
}

std::string KnowledgeGraph::relation_name(std::size_t relation) const {
  if (relation == self_loop()) return "self_loop";
  if (is_inverse(relation)) return train_.relations.name(base_relation(relation)) + "_inv";
  return train_.relations.name(relation);
}

std::optional<std::size_t> KnowledgeGraph::find_relation(std::string_view name) const {
  if (auto id = train_.relations.find(name)) return id;
  if (name == "self_loop") return self_loop();
  constexpr std::string_view suffix = "_inv";
  if (name.size() > suffix.size() && name.ends_with(suffix)) {
    if (auto id = train_.relations.find(name.substr(0, name.size() - suffix.size()))) {
      return inverse_of(*id);
    }
  }
  return std::nullopt;
}

const TripleSet& KnowledgeGraph::split(Split s) const {
  switch (s) {
    case Split::Train: return train_;
    case Split::Valid: return valid_;
    case Split::Test: return test_;
  }
  return train_;
}

std::span<const Edge> KnowledgeGraph::neighborhood(std::size_t entity) const {
  return std::span<const Edge>(edges_).subspan(offsets_.at(entity),
                                               offsets_.at(entity + 1) - offsets_[entity]);
}

std::vector<Triple> KnowledgeGraph::ranking_queries(Split s) const {
  std::vector<Triple> out;
  const TripleSet& set = split(s);
  out.reserve(2 * set.size());
  for (const Triple& t : set.triples) {
    out.push_back(t);
    out.push_back({t.tail, inverse_of(t.relation), t.head});
  }
  return out;
}

std::span<const std::size_t> KnowledgeGraph::known_answers(std::size_t entity,
                                                           std::size_t relation) const {
  auto it = known_.find(key(entity, relation));
  if (it == known_.end()) return {};
  return it->second;
}

const RelationCategory& KnowledgeGraph::category(std::size_t relation) const {
  return categories_.at(base_relation(relation));
}

nlohmann::json KnowledgeGraph::statistics() const {
  nlohmann::json j;
  j["entities"] = num_entities();
  j["relations"] = num_base_relations();
  j["augmented_relations"] = num_relations();
  j["train"] = train_.size();
  j["valid"] = valid_.size();
  j["test"] = test_.size();
  j["adjacency_edges"] = edges_.size();
  nlohmann::json cats = nlohmann::json::object();
  for (const RelationCategory& c : categories_) {
    const std::string label(to_string(c.category));
    cats[label] = cats.value(label, 0) + 1;
  }
  j["relation_categories"] = cats;
  return j;
}

}  // namespace disenkgat
