#include "disenkgat/model.hpp"

#include "disenkgat/errors.hpp"

namespace disenkgat {

ParamSet init_model_params(const ModelConfig& config, std::size_t num_entities,
                           std::size_t num_relations, Rng& rng) {
  ParamSet params;
  init_encoder_params(params, config.encoder, num_entities, num_relations, rng);
  init_decoder_params(params, config.decoder, config.encoder.component_dim, num_entities, rng);
  return params;
}

Encoding run_encoder(const BoundParams& params, const ModelConfig& config,
                     const KnowledgeGraph& graph, const Dropout& dropout) {
  return encode(graph, encoder_params(params, config.encoder), config.encoder, dropout);
}

QueryScores score_queries(const Encoding& encoding, const BoundParams& params,
                          const ModelConfig& config, const Index& entities,
                          const Index& relations, const Dropout& dropout) {
  if (entities.size() != relations.size()) {
    throw ShapeError("score_queries: entity and relation batches differ in length");
  }
  const std::size_t k = config.encoder.components;
  const Var heads = gather_rows(encoding.state.h, entities);
  const Var rels = gather_rows(encoding.relations, relations);
  const Var theta = gather_rows(lookup(params, "relation.theta"), relations);
  QueryScores out;
  out.component_scores = score_components(heads, rels, encoding.state.h,
                                          decoder_params(params, config.decoder), config.decoder,
                                          k, dropout);
  out.fusion = fusion_weights(heads, theta, rels, k);
  out.fused = fuse_scores(out.component_scores, out.fusion);
  return out;
}

FrozenModel freeze(const ParamSet& params, const ModelConfig& config, const KnowledgeGraph& graph) {
  Tape tape;
  const BoundParams bound = bind_params(tape, params, false);
  const Encoding enc = run_encoder(bound, config, graph);
  FrozenModel out;
  out.config = config;
  out.components = enc.state.h.value();
  out.relations = enc.relations.value();
  for (const Var& a : enc.attention) out.attention.push_back(a.value());
  if (out.attention.empty()) {
    // No aggregation layer: report the attention the first layer would use.
    const EncoderParams ep = encoder_params(bound, config.encoder);
    out.attention.push_back(attention_weights(enc.state, ep.theta, graph, config.encoder).value());
  }
  for (const auto& [name, value] : params) {
    if (name == "relation.theta" || name.starts_with("conve.")) out.scoring.emplace(name, value);
  }
  return out;
}

ScoredBatch score_frozen(const FrozenModel& model, const Index& entities, const Index& relations) {
  Tape tape;
  const BoundParams bound = bind_params(tape, model.scoring, false);
  Encoding enc;
  enc.state.h = tape.constant(model.components);
  enc.relations = tape.constant(model.relations);
  const QueryScores s = score_queries(enc, bound, model.config, entities, relations);
  return {s.component_scores.value(), s.fusion.value(), s.fused.value()};
}

}  // namespace disenkgat
