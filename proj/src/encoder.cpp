#include "disenkgat/encoder.hpp"

#include <cmath>
#include <string>

#include "disenkgat/errors.hpp"

namespace disenkgat {

CompositionOp parse_composition(std::string_view name) {
  if (name == "sub") return CompositionOp::Sub;
  if (name == "mult") return CompositionOp::Mult;
  if (name == "corr") return CompositionOp::Corr;
  if (name == "cross") return CompositionOp::Cross;
  throw ConfigError("unknown composition operator '" + std::string(name) +
                    "' (expected sub, mult, corr or cross)");
}

std::string_view to_string(CompositionOp op) {
  switch (op) {
    case CompositionOp::Sub: return "sub";
    case CompositionOp::Mult: return "mult";
    case CompositionOp::Corr: return "corr";
    case CompositionOp::Cross: return "cross";
  }
  return "?";
}

namespace {

std::string layer_transform_name(std::size_t layer) {
  return "encoder.layer" + std::to_string(layer) + ".relation_transform";
}

}  // namespace

void init_encoder_params(ParamSet& params, const EncoderConfig& config,
                         std::size_t num_entities, std::size_t num_relations, Rng& rng) {
  if (config.components == 0 || config.component_dim == 0) {
    throw ConfigError("components and component_dim must be positive");
  }
  const std::size_t d_in = config.feature_dim();
  const std::size_t d = config.component_dim;
  const std::size_t k = config.components;
  params["entity.features"] = xavier_uniform({num_entities, d_in}, d_in, num_entities, rng);

  const std::size_t proj_blocks = config.micro ? k : 1;
  Tensor proj(Shape{d_in, proj_blocks * d});
  for (std::size_t b = 0; b < proj_blocks; ++b) {
    const Tensor w = xavier_uniform({d_in, d}, d_in, d, rng);
    for (std::size_t i = 0; i < d_in; ++i) {
      for (std::size_t j = 0; j < d; ++j) proj.at(i, b * d + j) = w.at(i, j);
    }
  }
  params["encoder.projection"] = std::move(proj);
  params["relation.embedding"] = xavier_uniform({num_relations, d}, d, num_relations, rng);
  params["relation.theta"] = Tensor(Shape{num_relations, d}, 1.0);
  for (std::size_t l = 0; l < config.layers; ++l) {
    params[layer_transform_name(l)] = xavier_uniform({d, d}, d, d, rng);
  }
}

EncoderParams encoder_params(const BoundParams& params, const EncoderConfig& config) {
  EncoderParams p;
  p.features = lookup(params, "entity.features");
  p.projection = lookup(params, "encoder.projection");
  p.relations = lookup(params, "relation.embedding");
  p.theta = lookup(params, "relation.theta");
  for (std::size_t l = 0; l < config.layers; ++l) {
    p.relation_transforms.push_back(lookup(params, layer_transform_name(l)));
  }
  return p;
}

ComponentState disentangle_init(const EncoderParams& params, const EncoderConfig& config) {
  Var projected = matmul(params.features, params.projection);
  if (!config.micro) projected = tile_cols(projected, config.components);
  return {activate(projected, config.activation), 0};
}

Var compose(const Var& h_v, const Var& h_r, const Var& theta, CompositionOp op,
            std::size_t width) {
  const Var projected = theta * h_v;
  switch (op) {
    case CompositionOp::Sub: return projected - h_r;
    case CompositionOp::Mult: return projected * h_r;
    case CompositionOp::Corr:
      if (projected.shape().size() == 1) return circular_correlation(projected, h_r);
      return block_circular_correlation(projected, h_r, width);
    case CompositionOp::Cross: return projected + theta * (h_v * h_r);
  }
  throw ConfigError("unknown composition operator");
}

namespace {

// theta_r of every edge, repeated across the K components: E x (K * d_c).
Var edge_theta(const Var& theta, const KnowledgeGraph& graph, const EncoderConfig& config) {
  return tile_cols(gather_rows(theta, graph.edge_relations()), config.components);
}

Var attention_from_edge_theta(const ComponentState& state, const Var& theta_e,
                              const KnowledgeGraph& graph, const EncoderConfig& config) {
  Tape& tape = state.h.tape();
  if (!config.micro) {
    // Uniform weights 1/|N(u)| in place of attention.
    Tensor uniform(Shape{graph.edges().size(), config.components});
    for (std::size_t e = 0; e < graph.edges().size(); ++e) {
      const double w = 1.0 / static_cast<double>(graph.neighborhood(graph.edges()[e].entity).size());
      for (std::size_t k = 0; k < config.components; ++k) uniform.at(e, k) = w;
    }
    return tape.constant(std::move(uniform));
  }
  const Var e_u = gather_rows(state.h, graph.edge_entities()) * theta_e;
  const Var e_v = gather_rows(state.h, graph.edge_neighbors()) * theta_e;
  Var logits = block_sum(e_u * e_v, config.component_dim);
  if (config.scaled_attention) {
    logits = scale(logits, 1.0 / std::sqrt(static_cast<double>(config.component_dim)));
  }
  return segment_softmax(logits, graph.edge_entities(), graph.num_entities());
}

LayerOutput aggregate_with_edge_theta(const ComponentState& state, const Var& relations,
                                      const Var& theta_e, const EncoderParams& params,
                                      const KnowledgeGraph& graph, const EncoderConfig& config,
                                      const Dropout& dropout) {
  if (state.layer >= params.relation_transforms.size()) {
    throw ConfigError("no relation transform for layer " + std::to_string(state.layer));
  }
  const std::size_t d = config.component_dim;
  const Var alpha = attention_from_edge_theta(state, theta_e, graph, config);
  const Var h_v = gather_rows(state.h, graph.edge_neighbors());
  const Var h_r = tile_cols(gather_rows(relations, graph.edge_relations()), config.components);
  const Var messages = compose(h_v, h_r, theta_e, config.op, d);
  const Var weighted = repeat_elements(alpha, d) * messages;
  const Var aggregated = dropout(scatter_add_rows(weighted, graph.edge_entities(),
                                                  graph.num_entities()));
  LayerOutput out;
  out.state = {activate(aggregated, config.activation), state.layer + 1};
  // Row-vector convention: h_r^{l+1} = h_r^l W.
  out.relations = matmul(relations, params.relation_transforms[state.layer]);
  out.attention = alpha;
  return out;
}

}  // namespace

Var attention_weights(const ComponentState& state, const Var& theta,
                      const KnowledgeGraph& graph, const EncoderConfig& config) {
  return attention_from_edge_theta(state, edge_theta(theta, graph, config), graph, config);
}

LayerOutput aggregate_layer(const ComponentState& state, const Var& relations,
                            const EncoderParams& params, const KnowledgeGraph& graph,
                            const EncoderConfig& config, const Dropout& dropout) {
  return aggregate_with_edge_theta(state, relations, edge_theta(params.theta, graph, config),
                                   params, graph, config, dropout);
}

Encoding encode(const KnowledgeGraph& graph, const EncoderParams& params,
                const EncoderConfig& config, const Dropout& dropout) {
  Encoding enc;
  enc.state = disentangle_init(params, config);
  enc.relations = params.relations;
  if (config.layers == 0) return enc;
  const Var theta_e = edge_theta(params.theta, graph, config);
  for (std::size_t l = 0; l < config.layers; ++l) {
    LayerOutput layer =
        aggregate_with_edge_theta(enc.state, enc.relations, theta_e, params, graph, config, dropout);
    enc.state = layer.state;
    enc.relations = layer.relations;
    enc.attention.push_back(layer.attention);
  }
  return enc;
}

}  // namespace disenkgat
