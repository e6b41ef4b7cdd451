#include "disenkgat/params.hpp"

#include <cmath>
#include <stdexcept>

#include "disenkgat/errors.hpp"

namespace disenkgat {

BoundParams bind_params(Tape& tape, const ParamSet& params, bool requires_grad) {
  BoundParams out;
  for (const auto& [name, value] : params) out.emplace(name, tape.leaf(value, requires_grad));
  return out;
}

const Var& lookup(const BoundParams& params, const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw ConfigError("missing parameter '" + name + "'");
  return it->second;
}

Tensor xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = dist(rng);
  return t;
}

Dropout::Dropout(double rate, Rng* rng) : rate_(rate), rng_(rng) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must lie in [0, 1)");
}

Var Dropout::operator()(const Var& x) const {
  if (!active()) return x;
  std::bernoulli_distribution keep(1.0 - rate_);
  const double scale = 1.0 / (1.0 - rate_);
  Tensor mask(x.shape());
  for (double& m : mask.data()) m = keep(*rng_) ? scale : 0.0;
  return mul(x, x.tape().constant(std::move(mask)));
}

Adam::Adam(double learning_rate, double beta1, double beta2, double eps)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(ParamSet& params, const std::map<std::string, Tensor>& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (const auto& [name, g] : grads) {
    Tensor& p = params.at(name);
    auto [mit, m_new] = m_.try_emplace(name, Tensor(p.shape(), 0.0));
    auto [vit, v_new] = v_.try_emplace(name, Tensor(p.shape(), 0.0));
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      p[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

}  // namespace disenkgat
