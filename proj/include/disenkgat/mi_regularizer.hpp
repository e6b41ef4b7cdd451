#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "disenkgat/autograd.hpp"
#include "disenkgat/params.hpp"

namespace disenkgat {

/// Log-variance outputs of Q are clamped to this bound in magnitude.
inline constexpr double kLogVarBound = 10.0;

/// Variational conditional q(z_i | z_j): one two-layer network per ordered
/// component pair (i, j), i != j, producing the mean and log-variance of a
/// diagonal Gaussian over z_i. Hidden width equals the component dimension.
struct VariationalQ {
  std::size_t components = 0;
  std::size_t dim = 0;
  ParamSet params;

  static VariationalQ init(std::size_t components, std::size_t dim, Rng& rng);
};

struct GaussianParams {
  Var mean;     // B x d
  Var log_var;  // B x d, clamped
};

/// Runs the (i, j) network of bound Q parameters on conditioning rows z_j.
GaussianParams q_conditional(const BoundParams& q, std::size_t i, std::size_t j, const Var& z_j);

/// -1/2 sum_t [(z_t - mu_t)^2 / sigma_t^2 + log sigma_t^2 + log 2 pi], per row: B x 1.
Var gaussian_log_density(const Var& z, const Var& mean, const Var& log_var);

/// log q(z_i | z_j) for each row pair: B x 1.
Var q_log_prob(const BoundParams& q, std::size_t i, std::size_t j, const Var& z_i,
               const Var& z_j);
double q_log_prob(const VariationalQ& q, std::size_t i, std::size_t j,
                  std::span<const double> z_i, std::span<const double> z_j);

struct PairEstimate {
  std::size_t i = 0;
  std::size_t j = 0;
  double value = 0.0;
};

/// CLUB estimate in nats. `value` is a scalar on the components' tape.
struct MIEstimate {
  Var value;
  std::vector<PairEstimate> pairs;
};

/// Upper-bound MI between components of a batch (B x (K * d)), summed over all
/// ordered pairs: mean_u log q(z_{u,i}|z_{u,j}) - mean_u log q(z_{u,i}|z_{u',j})
/// with u' = (u + shift) mod B. Q enters as constants, so gradients reach the
/// components only. Requires B >= 2 and 1 <= shift < B.
MIEstimate club_loss(const Var& components, const VariationalQ& q, std::size_t shift);

/// One Adam step on Q maximizing the positive-pair log-likelihood of
/// `components` (treated as data). Returns the negative log-likelihood, summed
/// over pairs and averaged over rows, measured before the step.
double q_fit_step(VariationalQ& q, Adam& optimizer, const Tensor& components);

/// Median pairwise Euclidean distance between rows; 1 when that is zero.
double median_bandwidth(const Tensor& x);

/// Biased empirical HSIC with Gaussian kernels: trace(K H L H) / (B-1)^2.
Var hsic(const Var& x, const Var& y, double bandwidth_x, double bandwidth_y);

/// Sum of HSIC over unordered component pairs. A non-positive bandwidth means
/// the median heuristic, evaluated per component on the current values.
Var hsic_regularizer(const Var& components, std::size_t num_components, double bandwidth = 0.0);

}  // namespace disenkgat
