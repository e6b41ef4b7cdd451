#pragma once

#include <cstddef>
#include <string_view>
#include <utility>

#include "disenkgat/autograd.hpp"
#include "disenkgat/params.hpp"

namespace disenkgat {

enum class ScoreFunction { TransE, DistMult, ConvE };

ScoreFunction parse_score_function(std::string_view name);
std::string_view to_string(ScoreFunction fn);

struct ConvEConfig {
  // Reshape of a d_c vector into rows x cols; 0/0 picks a default.
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t kernel = 3;
  std::size_t filters = 32;
  double input_dropout = 0.0;
  double feature_dropout = 0.0;
  double hidden_dropout = 0.0;
  bool entity_bias = false;
};

struct DecoderConfig {
  ScoreFunction score = ScoreFunction::ConvE;
  ConvEConfig conve;
};

/// Resolves the ConvE reshape for `component_dim`: the configured one if set,
/// otherwise (10, d_c/10) when 10 divides d_c, otherwise the smallest row count
/// that leaves room for the kernel. Throws ConfigError if none is feasible.
std::pair<std::size_t, std::size_t> conve_reshape(const ConvEConfig& config,
                                                  std::size_t component_dim);

void init_decoder_params(ParamSet& params, const DecoderConfig& config,
                         std::size_t component_dim, std::size_t num_entities, Rng& rng);

struct DecoderParams {
  Var filters;      // F x kh x kw (ConvE)
  Var projection;   // (F * oh * ow) x d_c (ConvE)
  Var entity_bias;  // 1 x N (ConvE, optional)
};

DecoderParams decoder_params(const BoundParams& params, const DecoderConfig& config);

/// Per-component scores of every candidate: B x (K * N), block k holding
/// psi^k. `heads` is B x (K * d_c), `relations` is B x d_c, `candidates` is
/// N x (K * d_c).
Var score_components(const Var& heads, const Var& relations, const Var& candidates,
                     const DecoderParams& params, const DecoderConfig& config,
                     std::size_t components, const Dropout& dropout = {});

/// beta^k = softmax_k((h_{u,k} o theta_r)^T h_r): B x K.
Var fusion_weights(const Var& heads, const Var& theta, const Var& relations,
                   std::size_t components);

/// psi^final = sum_k beta^k psi^k: B x N raw fused scores.
Var fuse_scores(const Var& component_scores, const Var& weights);

/// Logistic map of raw scores into (0, 1).
Tensor logistic(const Tensor& scores);

}  // namespace disenkgat
