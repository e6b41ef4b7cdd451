#include "disenkgat/mi_regularizer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "disenkgat/errors.hpp"

namespace disenkgat {

namespace {

std::string q_name(std::size_t i, std::size_t j, const char* what) {
  return "q." + std::to_string(i) + "." + std::to_string(j) + "." + what;
}

// x (B x d) + b (1 x d) broadcast over rows.
Var add_bias(const Var& x, const Var& b) {
  return x + gather_rows(b, Index(x.shape()[0], 0));
}

}  // namespace

VariationalQ VariationalQ::init(std::size_t components, std::size_t dim, Rng& rng) {
  VariationalQ q;
  q.components = components;
  q.dim = dim;
  for (std::size_t i = 0; i < components; ++i) {
    for (std::size_t j = 0; j < components; ++j) {
      if (i == j) continue;
      q.params[q_name(i, j, "hidden_w")] = xavier_uniform({dim, dim}, dim, dim, rng);
      q.params[q_name(i, j, "hidden_b")] = Tensor(Shape{1, dim}, 0.0);
      q.params[q_name(i, j, "mean_w")] = xavier_uniform({dim, dim}, dim, dim, rng);
      q.params[q_name(i, j, "mean_b")] = Tensor(Shape{1, dim}, 0.0);
      q.params[q_name(i, j, "logvar_w")] = xavier_uniform({dim, dim}, dim, dim, rng);
      q.params[q_name(i, j, "logvar_b")] = Tensor(Shape{1, dim}, 0.0);
    }
  }
  return q;
}

GaussianParams q_conditional(const BoundParams& q, std::size_t i, std::size_t j, const Var& z_j) {
  if (i == j) throw std::invalid_argument("q_conditional needs distinct components");
  const Var hidden = activate(
      add_bias(matmul(z_j, lookup(q, q_name(i, j, "hidden_w"))), lookup(q, q_name(i, j, "hidden_b"))),
      Activation::Relu);
  GaussianParams out;
  out.mean = add_bias(matmul(hidden, lookup(q, q_name(i, j, "mean_w"))),
                      lookup(q, q_name(i, j, "mean_b")));
  out.log_var = clamp(add_bias(matmul(hidden, lookup(q, q_name(i, j, "logvar_w"))),
                               lookup(q, q_name(i, j, "logvar_b"))),
                      -kLogVarBound, kLogVarBound);
  return out;
}

Var gaussian_log_density(const Var& z, const Var& mean, const Var& log_var) {
  const std::size_t d = z.shape().at(1);
  const Var precision_term = square(z - mean) * exp(scale(log_var, -1.0));
  const Var per_dim = add_scalar(precision_term + log_var, std::log(2.0 * std::numbers::pi));
  return scale(block_sum(per_dim, d), -0.5);
}

Var q_log_prob(const BoundParams& q, std::size_t i, std::size_t j, const Var& z_i,
               const Var& z_j) {
  const GaussianParams g = q_conditional(q, i, j, z_j);
  return gaussian_log_density(z_i, g.mean, g.log_var);
}

double q_log_prob(const VariationalQ& q, std::size_t i, std::size_t j,
                  std::span<const double> z_i, std::span<const double> z_j) {
  if (z_i.size() != q.dim || z_j.size() != q.dim) {
    throw ShapeError("q_log_prob: component length differs from Q dimension");
  }
  Tape tape;
  const BoundParams bound = bind_params(tape, q.params, false);
  const Var zi = tape.constant(Tensor(Shape{1, q.dim}, {z_i.begin(), z_i.end()}));
  const Var zj = tape.constant(Tensor(Shape{1, q.dim}, {z_j.begin(), z_j.end()}));
  return q_log_prob(bound, i, j, zi, zj).value().item();
}

MIEstimate club_loss(const Var& components, const VariationalQ& q, std::size_t shift) {
  const std::size_t batch = components.shape().at(0);
  if (batch < 2) throw std::invalid_argument("club_loss needs a batch of at least 2 entities");
  if (shift == 0 || shift >= batch) {
    throw std::invalid_argument("club_loss: negative shift must lie in [1, B)");
  }
  if (components.shape().at(1) != q.components * q.dim) {
    throw ShapeError("club_loss: components " + shape_str(components.shape()) +
                     " do not match Q with " + std::to_string(q.components) + " x " +
                     std::to_string(q.dim));
  }
  Tape& tape = components.tape();
  MIEstimate out;
  if (q.components < 2) {
    out.value = tape.constant(Tensor::scalar(0.0));
    return out;
  }
  const BoundParams bound = bind_params(tape, q.params, false);
  Index shifted(batch);
  for (std::size_t u = 0; u < batch; ++u) shifted[u] = (u + shift) % batch;

  std::vector<Var> blocks;
  for (std::size_t k = 0; k < q.components; ++k) {
    blocks.push_back(slice_cols(components, k * q.dim, q.dim));
  }
  Var total;
  for (std::size_t i = 0; i < q.components; ++i) {
    for (std::size_t j = 0; j < q.components; ++j) {
      if (i == j) continue;
      const Var positive = mean(q_log_prob(bound, i, j, blocks[i], blocks[j]));
      const Var negative = mean(q_log_prob(bound, i, j, blocks[i], gather_rows(blocks[j], shifted)));
      const Var pair = positive - negative;
      out.pairs.push_back({i, j, pair.value().item()});
      total = total.valid() ? total + pair : pair;
    }
  }
  out.value = total;
  return out;
}

double q_fit_step(VariationalQ& q, Adam& optimizer, const Tensor& components) {
  if (q.components < 2) return 0.0;
  Tape tape;
  const BoundParams bound = bind_params(tape, q.params, true);
  const Var z = tape.constant(components);
  Var nll;
  for (std::size_t i = 0; i < q.components; ++i) {
    for (std::size_t j = 0; j < q.components; ++j) {
      if (i == j) continue;
      const Var zi = slice_cols(z, i * q.dim, q.dim);
      const Var zj = slice_cols(z, j * q.dim, q.dim);
      const Var term = scale(mean(q_log_prob(bound, i, j, zi, zj)), -1.0);
      nll = nll.valid() ? nll + term : term;
    }
  }
  tape.backward(nll);
  std::map<std::string, Tensor> grads;
  for (const auto& [name, var] : bound) grads.emplace(name, tape.grad(var));
  optimizer.step(q.params, grads);
  return nll.value().item();
}

double median_bandwidth(const Tensor& x) {
  const std::size_t b = x.dim(0), d = x.dim(1);
  std::vector<double> dist;
  dist.reserve(b * (b - 1) / 2);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = i + 1; j < b; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < d; ++t) {
        const double diff = x.at(i, t) - x.at(j, t);
        acc += diff * diff;
      }
      dist.push_back(std::sqrt(acc));
    }
  }
  if (dist.empty()) return 1.0;
  auto mid = dist.begin() + static_cast<std::ptrdiff_t>(dist.size() / 2);
  std::nth_element(dist.begin(), mid, dist.end());
  return *mid > 0.0 ? *mid : 1.0;
}

Var hsic(const Var& x, const Var& y, double bandwidth_x, double bandwidth_y) {
  const std::size_t b = x.shape().at(0);
  if (b < 2 || y.shape().at(0) != b) {
    throw ShapeError("hsic needs two samples of equal size >= 2, got " + shape_str(x.shape()) +
                     " and " + shape_str(y.shape()));
  }
  const Var kx = exp(scale(pairwise_sq_dist(x), -0.5 / (bandwidth_x * bandwidth_x)));
  const Var ly = exp(scale(pairwise_sq_dist(y), -0.5 / (bandwidth_y * bandwidth_y)));
  const double norm = static_cast<double>(b - 1) * static_cast<double>(b - 1);
  return scale(sum(double_center(kx) * ly), 1.0 / norm);
}

Var hsic_regularizer(const Var& components, std::size_t num_components, double bandwidth) {
  const std::size_t d = components.shape().at(1) / num_components;
  std::vector<Var> blocks;
  std::vector<double> widths;
  for (std::size_t k = 0; k < num_components; ++k) {
    blocks.push_back(slice_cols(components, k * d, d));
    widths.push_back(bandwidth > 0.0 ? bandwidth : median_bandwidth(blocks.back().value()));
  }
  Var total = components.tape().constant(Tensor::scalar(0.0));
  for (std::size_t i = 0; i < num_components; ++i) {
    for (std::size_t j = i + 1; j < num_components; ++j) {
      total = total + hsic(blocks[i], blocks[j], widths[i], widths[j]);
    }
  }
  return total;
}

}  // namespace disenkgat
