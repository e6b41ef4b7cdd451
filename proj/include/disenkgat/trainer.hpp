#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "disenkgat/checkpoint.hpp"
#include "disenkgat/config.hpp"
#include "disenkgat/kg_store.hpp"
#include "disenkgat/mi_regularizer.hpp"
#include "disenkgat/model.hpp"

namespace disenkgat {

/// Smoothed multi-hot targets for KvsAll training: B x N with
/// t~ = t (1 - eps) + eps / N.
Tensor smoothed_targets(std::span<const LabeledQuery> batch, std::size_t num_entities,
                        double smoothing);

/// Distinct query entities of a batch, in order of first appearance.
Index unique_entities(std::span<const LabeledQuery> batch);

struct BatchObjective {
  Var total;        // bce + lambda * regularizer
  Var bce;          // mean smoothed binary cross-entropy
  Var regularizer;  // CLUB or HSIC value; constant 0 when disabled or undefined
  QueryScores scores;
};

/// Called with the batch components (unique entities x (K * d_c)) right
/// before the CLUB estimate, so Q can be refit on exactly these values.
using ComponentHook = std::function<void(const Tensor&)>;

/// Training objective on one batch. The regularizer is computed on the final
/// components of the batch's distinct query entities; it is zero when fewer
/// than two are present, when K = 1, or when `config.macro` is none. CLUB
/// pairs entity u with entity (u + s) mod B', where s = 1 + shift_seed mod (B' - 1).
BatchObjective objective(const BoundParams& params, const TrainConfig& config,
                         const KnowledgeGraph& graph, std::span<const LabeledQuery> batch,
                         const VariationalQ* q, std::uint64_t shift_seed,
                         const Dropout& dropout = {}, const ComponentHook& before_club = {});

struct StepStats {
  double loss = 0.0;
  double bce = 0.0;
  double mi = 0.0;
  double q_nll = 0.0;
};

class Trainer {
 public:
  /// Draws all parameters from config.seed. Throws ConfigError on invalid settings.
  Trainer(TrainConfig config, const KnowledgeGraph& graph);

  /// One alternation: fit Q on the batch components, then an Adam step on the
  /// model against the objective with Q held fixed. Throws NumericalError if
  /// the loss or any gradient is not finite.
  StepStats step(std::span<const LabeledQuery> batch);

  /// One pass over the shuffled train queries. No validation.
  EpochRecord run_epoch();

  const TrainConfig& config() const { return config_; }
  const ParamSet& params() const { return params_; }
  const VariationalQ& q() const { return q_; }
  std::size_t epoch() const { return epoch_; }
  std::uint64_t steps() const { return step_; }

  Checkpoint checkpoint(const nlohmann::json& meta, std::vector<EpochRecord> history) const;

 private:
  TrainConfig config_;
  const KnowledgeGraph* graph_;
  Rng rng_;
  ParamSet params_;
  VariationalQ q_;
  Adam adam_;
  Adam q_adam_;
  std::vector<std::size_t> order_;
  std::size_t epoch_ = 0;
  std::uint64_t step_ = 0;
};

struct TrainResult {
  Checkpoint best;  // highest validation MRR; the last state if never validated
  Checkpoint last;
  std::vector<EpochRecord> history;
  bool stopped_early = false;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Full run: config.epochs epochs, validation every config.eval_every epochs
/// when the valid split is non-empty, early stopping after config.patience
/// validations without improvement.
TrainResult train(const TrainConfig& config, const KnowledgeGraph& graph,
                  const nlohmann::json& meta = nlohmann::json::object(),
                  const EpochCallback& on_epoch = {});

/// Dataset description stored with checkpoints.
nlohmann::json graph_meta(const KnowledgeGraph& graph, const std::string& data_dir);

}  // namespace disenkgat
