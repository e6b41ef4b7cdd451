#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "disenkgat/autograd.hpp"
#include "disenkgat/kg_store.hpp"
#include "disenkgat/params.hpp"

namespace disenkgat {

/// Entity-relation interaction used to build neighbor messages.
enum class CompositionOp { Sub, Mult, Corr, Cross };

CompositionOp parse_composition(std::string_view name);
std::string_view to_string(CompositionOp op);

struct EncoderConfig {
  std::size_t components = 4;      // K
  std::size_t component_dim = 50;  // d_c
  std::size_t input_dim = 0;       // width of x_u; 0 means K * d_c
  std::size_t layers = 1;          // L
  CompositionOp op = CompositionOp::Cross;
  Activation activation = Activation::Tanh;
  double dropout = 0.1;
  bool scaled_attention = false;  // divide attention logits by sqrt(d_c)
  // Off: one projection shared by all components and uniform (mean)
  // neighborhood aggregation in place of relation-aware attention.
  bool micro = true;

  std::size_t feature_dim() const { return input_dim ? input_dim : components * component_dim; }
  std::size_t total_dim() const { return components * component_dim; }
};

/// Adds the encoder tables for a graph with `num_entities` entities and
/// `num_relations` augmented relations. theta starts at the identity diagonal.
void init_encoder_params(ParamSet& params, const EncoderConfig& config,
                         std::size_t num_entities, std::size_t num_relations, Rng& rng);

struct EncoderParams {
  Var features;    // N x d_in
  Var projection;  // d_in x (K * d_c), block k is W_k^T
  Var relations;   // (2R+1) x d_c, layer-0 relation table
  Var theta;       // (2R+1) x d_c, diagonal relation projections
  std::vector<Var> relation_transforms;  // one d_c x d_c per layer
};

EncoderParams encoder_params(const BoundParams& params, const EncoderConfig& config);

/// Layer-l components h^l_{u,k}, stored as N x (K * d_c) with component k in
/// columns [k*d_c, (k+1)*d_c).
struct ComponentState {
  Var h;
  std::size_t layer = 0;
};

/// h^0_{u,k} = act(W_k x_u).
ComponentState disentangle_init(const EncoderParams& params, const EncoderConfig& config);

/// Message phi(h_v, h_r, theta_r), row-wise. All operands share one shape; for
/// Corr the correlation runs over consecutive `width`-sized blocks.
Var compose(const Var& h_v, const Var& h_r, const Var& theta, CompositionOp op,
            std::size_t width);

/// Attention over every neighborhood, one column per component: an E x K
/// matrix aligned with graph.edges(), each (u, k) group summing to 1.
Var attention_weights(const ComponentState& state, const Var& theta,
                      const KnowledgeGraph& graph, const EncoderConfig& config);

struct LayerOutput {
  ComponentState state;
  Var relations;
  Var attention;  // E x K weights used by this layer
};

/// One round of relation-aware aggregation plus the relation-table update.
LayerOutput aggregate_layer(const ComponentState& state, const Var& relations,
                            const EncoderParams& params, const KnowledgeGraph& graph,
                            const EncoderConfig& config, const Dropout& dropout = {});

struct Encoding {
  ComponentState state;
  Var relations;
  std::vector<Var> attention;  // per layer
};

/// disentangle_init followed by config.layers aggregation layers.
Encoding encode(const KnowledgeGraph& graph, const EncoderParams& params,
                const EncoderConfig& config, const Dropout& dropout = {});

}  // namespace disenkgat
