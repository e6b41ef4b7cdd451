#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "disenkgat/autograd.hpp"

namespace disenkgat {

/// Builds a scalar on `tape` from leaves bound to the check point.
using ScalarFunction = std::function<Var(Tape& tape, std::span<const Var> inputs)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  // Location of the worst coordinate.
  std::size_t input = 0;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

/// Compares the tape gradient of `f` at `point` with the fourth-order central
/// difference [8(f(x+h) - f(x-h)) - (f(x+2h) - f(x-2h))] / 12h, coordinate by
/// coordinate. The relative error of a coordinate is |a - n| / max(|a|, |n|, 1e-8),
/// minimized over h in {step, step/10, step/100}: the large step keeps round-off
/// small next to gradients near 1e-8, the small ones avoid straddling relu or
/// abs kinks. A wrong analytic gradient disagrees at every step.
GradCheckResult grad_check(const ScalarFunction& f, const std::vector<Tensor>& point,
                           double step = 1e-3);

}  // namespace disenkgat
