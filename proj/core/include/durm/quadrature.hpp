#pragma once

#include <cstddef>
#include <functional>

namespace durm {

struct QuadResult {
  double value = 0.0;
  // Sum of the accepted Richardson error estimates plus the unmet tolerance
  // of any panel abandoned at the budget; an upper-bound style residual.
  double residual = 0.0;
  bool converged = true;
  std::size_t evals = 0;
};

// Adaptive Simpson integration of f over [a, b] to an absolute tolerance.
// The interval is first cut into `pre_panels` uniform panels so that a
// narrow peak cannot hide between the initial sample points, then each
// panel is halved adaptively with Richardson extrapolation. `max_evals`
// bounds the number of integrand evaluations.
QuadResult integrate(const std::function<double(double)>& f, double a, double b,
                     double abs_tol = 1e-10, std::size_t max_evals = 1u << 22,
                     std::size_t pre_panels = 128);

}  // namespace durm
