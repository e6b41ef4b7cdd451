#include "disenkgat/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "disenkgat/errors.hpp"

namespace disenkgat {

namespace {

double evaluate(const ScalarFunction& f, const std::vector<Tensor>& point) {
  Tape tape;
  std::vector<Var> inputs;
  inputs.reserve(point.size());
  for (const Tensor& t : point) inputs.push_back(tape.constant(t));
  return f(tape, inputs).value().item();
}

}  // namespace

GradCheckResult grad_check(const ScalarFunction& f, const std::vector<Tensor>& point,
                           double step) {
  if (!(step > 0.0)) throw std::invalid_argument("grad_check: step must be positive");

  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> inputs;
    for (const Tensor& t : point) inputs.push_back(tape.leaf(t));
    const Var out = f(tape, inputs);
    tape.backward(out);
    for (const Var& v : inputs) analytic.push_back(tape.grad(v));
  }

  GradCheckResult result;
  std::vector<Tensor> probe = point;
  for (std::size_t p = 0; p < probe.size(); ++p) {
    for (std::size_t i = 0; i < probe[p].size(); ++i) {
      const double orig = probe[p][i];
      const auto at = [&](double offset) {
        probe[p][i] = orig + offset;
        return evaluate(f, probe);
      };
      const double a = analytic[p][i];
      double err = HUGE_VAL, numeric = 0.0;
      for (double h = step; h >= step * 1e-2; h *= 0.1) {
        const double n = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
        const double e = std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8});
        if (e < err) {
          err = e;
          numeric = n;
        }
        if (err < 1e-6) break;
      }
      probe[p][i] = orig;
      ++result.coordinates;
      if (err > result.max_rel_error || !std::isfinite(err)) {
        result.max_rel_error = std::isfinite(err) ? err : HUGE_VAL;
        result.input = p;
        result.index = i;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace disenkgat
