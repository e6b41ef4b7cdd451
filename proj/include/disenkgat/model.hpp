#pragma once

#include <cstddef>
#include <vector>

#include "disenkgat/decoder.hpp"
#include "disenkgat/encoder.hpp"
#include "disenkgat/kg_store.hpp"
#include "disenkgat/params.hpp"

namespace disenkgat {

struct ModelConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;
};

/// Validates the configuration and draws Xavier-initialized parameters.
ParamSet init_model_params(const ModelConfig& config, std::size_t num_entities,
                           std::size_t num_relations, Rng& rng);

Encoding run_encoder(const BoundParams& params, const ModelConfig& config,
                     const KnowledgeGraph& graph, const Dropout& dropout = {});

/// Scores of a batch of (u, r) queries against every entity.
struct QueryScores {
  Var component_scores;  // B x (K * N)
  Var fusion;            // B x K
  Var fused;             // B x N, raw (pre-logistic)
};

QueryScores score_queries(const Encoding& encoding, const BoundParams& params,
                          const ModelConfig& config, const Index& entities,
                          const Index& relations, const Dropout& dropout = {});

/// Encoder outputs detached from any tape, for repeated inference-time scoring.
struct FrozenModel {
  ModelConfig config;
  Tensor components;              // N x (K * d_c), last layer
  Tensor relations;               // (2R+1) x d_c, last layer
  std::vector<Tensor> attention;  // E x K per layer; one entry (on h^0) when L = 0
  ParamSet scoring;               // theta and decoder tables
};

/// Runs the encoder once without dropout.
FrozenModel freeze(const ParamSet& params, const ModelConfig& config, const KnowledgeGraph& graph);

struct ScoredBatch {
  Tensor component_scores;  // B x (K * N)
  Tensor fusion;            // B x K
  Tensor fused;             // B x N, raw
};

ScoredBatch score_frozen(const FrozenModel& model, const Index& entities, const Index& relations);

}  // namespace disenkgat
