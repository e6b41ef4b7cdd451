#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>

#include "disenkgat/autograd.hpp"

namespace disenkgat {

/// Named parameter tensors. Ordered by name so iteration is deterministic.
using ParamSet = std::map<std::string, Tensor>;
using BoundParams = std::map<std::string, Var>;
using Rng = std::mt19937_64;

/// Records every tensor of `params` as a leaf on `tape`.
BoundParams bind_params(Tape& tape, const ParamSet& params, bool requires_grad);

const Var& lookup(const BoundParams& params, const std::string& name);

/// Glorot/Xavier uniform: U(-b, b), b = sqrt(6 / (fan_in + fan_out)).
Tensor xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);

/// Inverted dropout. Inactive (identity) when `rng` is null or `rate` is 0.
class Dropout {
 public:
  Dropout() = default;
  Dropout(double rate, Rng* rng);

  Var operator()(const Var& x) const;
  bool active() const { return rng_ != nullptr && rate_ > 0.0; }
  Dropout with_rate(double rate) const { return Dropout(rate, rng_); }

 private:
  double rate_ = 0.0;
  Rng* rng_ = nullptr;
};

/// Adam with bias correction; state is keyed by parameter name.
class Adam {
 public:
  explicit Adam(double learning_rate = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);

  void step(ParamSet& params, const std::map<std::string, Tensor>& grads);
  double learning_rate() const { return lr_; }
  std::uint64_t steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::map<std::string, Tensor> m_, v_;
};

}  // namespace disenkgat
