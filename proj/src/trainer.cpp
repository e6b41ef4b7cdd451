#include "disenkgat/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "disenkgat/errors.hpp"

namespace disenkgat {

namespace {

// Separate streams so that, e.g., changing dropout does not move the init.
Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return Rng(seq);
}

}  // namespace

Tensor smoothed_targets(std::span<const LabeledQuery> batch, std::size_t num_entities,
                        double smoothing) {
  const double off = smoothing / static_cast<double>(num_entities);
  Tensor t(Shape{batch.size(), num_entities}, off);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    for (std::size_t a : batch[b].answers) t.at(b, a) = (1.0 - smoothing) + off;
  }
  return t;
}

Index unique_entities(std::span<const LabeledQuery> batch) {
  Index out;
  std::unordered_set<std::size_t> seen;
  for (const LabeledQuery& q : batch) {
    if (seen.insert(q.entity).second) out.push_back(q.entity);
  }
  return out;
}

BatchObjective objective(const BoundParams& params, const TrainConfig& config,
                         const KnowledgeGraph& graph, std::span<const LabeledQuery> batch,
                         const VariationalQ* q, std::uint64_t shift_seed,
                         const Dropout& dropout, const ComponentHook& before_club) {
  if (batch.empty()) throw std::invalid_argument("objective: empty batch");
  const std::size_t n = graph.num_entities();
  const std::size_t k = config.model.encoder.components;
  const Encoding enc = run_encoder(params, config.model, graph, dropout);
  Tape& tape = enc.state.h.tape();

  Index heads, rels;
  for (const LabeledQuery& query : batch) {
    heads.push_back(query.entity);
    rels.push_back(query.relation);
  }
  BatchObjective out;
  out.scores = score_queries(enc, params, config.model, heads, rels, dropout);
  const Tensor targets = smoothed_targets(batch, n, config.label_smoothing);
  out.bce = scale(bce_with_logits(out.scores.fused, targets),
                  1.0 / (static_cast<double>(batch.size()) * static_cast<double>(n)));

  const Index entities = unique_entities(batch);
  const bool regularize = config.macro != MacroMode::None && k >= 2 && entities.size() >= 2;
  if (!regularize) {
    out.regularizer = tape.constant(Tensor::scalar(0.0));
    out.total = out.bce;
    return out;
  }
  const Var components = gather_rows(enc.state.h, entities);
  if (config.macro == MacroMode::Club) {
    if (q == nullptr) throw std::invalid_argument("objective: club regularizer needs Q");
    if (before_club) before_club(components.value());
    const std::size_t shift = 1 + static_cast<std::size_t>(shift_seed % (entities.size() - 1));
    out.regularizer = club_loss(components, *q, shift).value;
  } else {
    out.regularizer = hsic_regularizer(components, k, config.hsic_bandwidth);
  }
  out.total = config.mi_weight > 0.0 ? out.bce + scale(out.regularizer, config.mi_weight) : out.bce;
  return out;
}

Trainer::Trainer(TrainConfig config, const KnowledgeGraph& graph)
    : config_(std::move(config)),
      graph_(&graph),
      rng_(make_rng(config_.seed, 1)),
      adam_(config_.learning_rate),
      q_adam_(config_.q_learning_rate) {
  config_.validate();
  Rng init = make_rng(config_.seed, 0);
  params_ = init_model_params(config_.model, graph.num_entities(), graph.num_relations(), init);
  q_ = VariationalQ::init(config_.model.encoder.components, config_.model.encoder.component_dim,
                          init);
  order_.resize(graph.train_queries().size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
}

StepStats Trainer::step(std::span<const LabeledQuery> batch) {
  Tape tape;
  const BoundParams bound = bind_params(tape, params_, true);
  const Dropout dropout(config_.model.encoder.dropout, &rng_);
  const std::uint64_t shift_seed = rng_();
  StepStats stats;
  const ComponentHook fit_q = [&](const Tensor& components) {
    stats.q_nll = q_fit_step(q_, q_adam_, components);
  };
  const BatchObjective obj = objective(bound, config_, *graph_, batch, &q_, shift_seed, dropout,
                                       config_.macro == MacroMode::Club ? fit_q : ComponentHook{});
  stats.loss = obj.total.value().item();
  stats.bce = obj.bce.value().item();
  stats.mi = obj.regularizer.value().item();
  if (!std::isfinite(stats.loss) || !std::isfinite(stats.mi)) {
    std::ostringstream msg;
    msg << "non-finite loss at step " << step_ << " (epoch " << epoch_ << "): bce=" << stats.bce
        << " regularizer=" << stats.mi << " q_nll=" << stats.q_nll
        << "; try a lower learning rate or lambda";
    throw NumericalError(msg.str());
  }
  tape.backward(obj.total);
  std::map<std::string, Tensor> grads;
  for (const auto& [name, var] : bound) {
    Tensor g = tape.grad(var);
    if (!g.all_finite()) {
      throw NumericalError("non-finite gradient for '" + name + "' at step " +
                           std::to_string(step_));
    }
    grads.emplace(name, std::move(g));
  }
  adam_.step(params_, grads);
  ++step_;
  return stats;
}

EpochRecord Trainer::run_epoch() {
  const auto& queries = graph_->train_queries();
  std::shuffle(order_.begin(), order_.end(), rng_);
  EpochRecord rec;
  std::size_t batches = 0;
  std::vector<LabeledQuery> batch;
  for (std::size_t begin = 0; begin < order_.size(); begin += config_.batch_size) {
    const std::size_t end = std::min(begin + config_.batch_size, order_.size());
    batch.clear();
    for (std::size_t i = begin; i < end; ++i) batch.push_back(queries[order_[i]]);
    const StepStats s = step(batch);
    rec.loss += s.loss;
    rec.bce += s.bce;
    rec.mi += s.mi;
    rec.q_nll += s.q_nll;
    ++batches;
  }
  if (batches > 0) {
    const double b = static_cast<double>(batches);
    rec.loss /= b;
    rec.bce /= b;
    rec.mi /= b;
    rec.q_nll /= b;
  }
  rec.epoch = ++epoch_;
  rec.step = step_;
  return rec;
}

Checkpoint Trainer::checkpoint(const nlohmann::json& meta, std::vector<EpochRecord> history) const {
  Checkpoint c;
  c.config = config_;
  c.meta = meta;
  c.step = step_;
  c.epoch = epoch_;
  c.params = params_;
  c.q_params = q_.params;
  c.history = std::move(history);
  return c;
}

TrainResult train(const TrainConfig& config, const KnowledgeGraph& graph,
                  const nlohmann::json& meta, const EpochCallback& on_epoch) {
  Trainer trainer(config, graph);
  TrainResult result;
  const bool can_validate = config.eval_every > 0 && graph.split(Split::Valid).size() > 0;
  double best_mrr = -1.0;
  std::size_t stale = 0;
  bool have_best = false;
  for (std::size_t e = 0; e < config.epochs; ++e) {
    EpochRecord rec = trainer.run_epoch();
    const bool validate = can_validate && (rec.epoch % config.eval_every == 0 || e + 1 == config.epochs);
    if (validate) {
      rec.valid = evaluate(trainer.params(), config.model, graph, Split::Valid).overall;
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (validate) {
      if (rec.valid->mrr > best_mrr) {
        best_mrr = rec.valid->mrr;
        stale = 0;
        result.best = trainer.checkpoint(meta, result.history);
        have_best = true;
      } else if (config.patience > 0 && ++stale >= config.patience) {
        result.stopped_early = true;
        break;
      }
    }
  }
  result.last = trainer.checkpoint(meta, result.history);
  if (!have_best) result.best = result.last;
  return result;
}

nlohmann::json graph_meta(const KnowledgeGraph& graph, const std::string& data_dir) {
  return {{"data_dir", data_dir},
          {"entities", graph.num_entities()},
          {"relations", graph.num_base_relations()},
          {"train", graph.split(Split::Train).size()}};
}

}  // namespace disenkgat
