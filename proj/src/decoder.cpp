#include "disenkgat/decoder.hpp"

#include <cmath>
#include <string>

#include "disenkgat/errors.hpp"

namespace disenkgat {

ScoreFunction parse_score_function(std::string_view name) {
  if (name == "transe") return ScoreFunction::TransE;
  if (name == "distmult") return ScoreFunction::DistMult;
  if (name == "conve") return ScoreFunction::ConvE;
  throw ConfigError("unknown score function '" + std::string(name) +
                    "' (expected transe, distmult or conve)");
}

std::string_view to_string(ScoreFunction fn) {
  switch (fn) {
    case ScoreFunction::TransE: return "transe";
    case ScoreFunction::DistMult: return "distmult";
    case ScoreFunction::ConvE: return "conve";
  }
  return "?";
}

std::pair<std::size_t, std::size_t> conve_reshape(const ConvEConfig& config,
                                                  std::size_t component_dim) {
  const std::size_t k = config.kernel;
  auto feasible = [&](std::size_t rows, std::size_t cols) {
    return rows * cols == component_dim && 2 * rows >= k && cols >= k && k > 0;
  };
  if (config.rows || config.cols) {
    if (!feasible(config.rows, config.cols)) {
      throw ConfigError("ConvE reshape " + std::to_string(config.rows) + "x" +
                        std::to_string(config.cols) + " infeasible for component dimension " +
                        std::to_string(component_dim) + " and kernel " + std::to_string(k));
    }
    return {config.rows, config.cols};
  }
  if (component_dim % 10 == 0 && feasible(10, component_dim / 10)) {
    return {10, component_dim / 10};
  }
  for (std::size_t rows = 2; rows <= component_dim; ++rows) {
    if (component_dim % rows == 0 && feasible(rows, component_dim / rows)) {
      return {rows, component_dim / rows};
    }
  }
  throw ConfigError("no feasible ConvE reshape for component dimension " +
                    std::to_string(component_dim) + " with kernel " + std::to_string(k));
}

namespace {

struct ConvEGeometry {
  std::size_t rows, cols, out_h, out_w, flat;
};

ConvEGeometry conve_geometry(const ConvEConfig& config, std::size_t component_dim) {
  const auto [rows, cols] = conve_reshape(config, component_dim);
  const std::size_t out_h = 2 * rows - config.kernel + 1;
  const std::size_t out_w = cols - config.kernel + 1;
  return {rows, cols, out_h, out_w, config.filters * out_h * out_w};
}

}  // namespace

void init_decoder_params(ParamSet& params, const DecoderConfig& config,
                         std::size_t component_dim, std::size_t num_entities, Rng& rng) {
  if (config.score != ScoreFunction::ConvE) return;
  const ConvEConfig& c = config.conve;
  if (c.filters == 0) throw ConfigError("ConvE needs at least one filter");
  const ConvEGeometry g = conve_geometry(c, component_dim);
  const std::size_t area = c.kernel * c.kernel;
  params["conve.filters"] =
      xavier_uniform({c.filters, c.kernel, c.kernel}, area, c.filters * area, rng);
  params["conve.projection"] = xavier_uniform({g.flat, component_dim}, g.flat, component_dim, rng);
  if (c.entity_bias) params["conve.entity_bias"] = Tensor(Shape{1, num_entities}, 0.0);
}

DecoderParams decoder_params(const BoundParams& params, const DecoderConfig& config) {
  DecoderParams p;
  if (config.score != ScoreFunction::ConvE) return p;
  p.filters = lookup(params, "conve.filters");
  p.projection = lookup(params, "conve.projection");
  if (config.conve.entity_bias) p.entity_bias = lookup(params, "conve.entity_bias");
  return p;
}

Var score_components(const Var& heads, const Var& relations, const Var& candidates,
                     const DecoderParams& params, const DecoderConfig& config,
                     std::size_t components, const Dropout& dropout) {
  const std::size_t batch = heads.shape().at(0);
  const std::size_t d = relations.shape().at(1);
  switch (config.score) {
    case ScoreFunction::TransE:
      return block_neg_l1_scores(heads + tile_cols(relations, components), candidates,
                                 components);
    case ScoreFunction::DistMult:
      return block_dot_scores(heads * tile_cols(relations, components), candidates, components);
    case ScoreFunction::ConvE: {
      const ConvEConfig& c = config.conve;
      const ConvEGeometry g = conve_geometry(c, d);
      // One image per (query, component): the reshaped h_{u,k} stacked on the
      // reshaped h_r gives a (2 * rows) x cols input.
      Index repeat(batch * components);
      for (std::size_t i = 0; i < repeat.size(); ++i) repeat[i] = i / components;
      const Var parts[] = {reshape(heads, {batch * components, d}), gather_rows(relations, repeat)};
      Var image = reshape(concat(parts, 1), {batch * components, 2 * g.rows, g.cols});
      image = dropout.with_rate(c.input_dropout)(image);
      Var features = activate(conv2d(image, params.filters), Activation::Relu);
      features = dropout.with_rate(c.feature_dropout)(features);
      Var hidden = matmul(reshape(features, {batch * components, g.flat}), params.projection);
      hidden = dropout.with_rate(c.hidden_dropout)(hidden);
      hidden = activate(hidden, Activation::Relu);
      Var scores = block_dot_scores(reshape(hidden, {batch, components * d}), candidates,
                                    components);
      if (c.entity_bias) {
        const Var rows = gather_rows(params.entity_bias, Index(batch, 0));
        scores = scores + tile_cols(rows, components);
      }
      return scores;
    }
  }
  throw ConfigError("unknown score function");
}

Var fusion_weights(const Var& heads, const Var& theta, const Var& relations,
                   std::size_t components) {
  const std::size_t d = relations.shape().at(1);
  const Var logits = block_sum(heads * tile_cols(theta * relations, components), d);
  return softmax(logits, 1);
}

Var fuse_scores(const Var& component_scores, const Var& weights) {
  return block_weighted_sum(weights, component_scores);
}

Tensor logistic(const Tensor& scores) {
  Tensor out(scores.shape());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double x = scores[i];
    out[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
  return out;
}

}  // namespace disenkgat
