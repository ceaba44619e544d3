#include "durm/quadrature.hpp"

#include <cmath>

namespace durm {

namespace {

struct Adapt {
  const std::function<double(double)>& f;
  std::size_t max_evals;
  std::size_t evals = 0;
  double residual = 0.0;
  bool converged = true;

  double eval(double x) {
    ++evals;
    return f(x);
  }

  static double simpson(double a, double fa, double fm, double fb, double b) {
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  }

  double recurse(double a, double fa, double m, double fm, double b, double fb,
                 double whole, double tol, int depth) {
    if (evals + 4 > max_evals || depth > 48) {
      converged = false;
      residual += tol;
      return whole;
    }
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = eval(lm);
    const double frm = eval(rm);
    const double left = simpson(a, fa, flm, fm, m);
    const double right = simpson(m, fm, frm, fb, b);
    const double delta = left + right - whole;
    if (std::abs(delta) <= 15.0 * tol) {
      residual += std::abs(delta) / 15.0;
      return left + right + delta / 15.0;
    }
    return recurse(a, fa, lm, flm, m, fm, left, 0.5 * tol, depth + 1) +
           recurse(m, fm, rm, frm, b, fb, right, 0.5 * tol, depth + 1);
  }
};

}  // namespace

QuadResult integrate(const std::function<double(double)>& f, double a, double b,
                     double abs_tol, std::size_t max_evals,
                     std::size_t pre_panels) {
  QuadResult result;
  if (a == b || pre_panels == 0) return result;

  Adapt state{f, max_evals};
  const double width = (b - a) / double(pre_panels);
  double total = 0.0;
  double left_x = a;
  double left_f = state.eval(a);
  for (std::size_t p = 0; p < pre_panels; ++p) {
    if (state.evals + 2 > state.max_evals) {
      state.converged = false;
      state.residual += abs_tol * (b - left_x) / (b - a);
      break;
    }
    const double right_x = (p + 1 == pre_panels) ? b : a + double(p + 1) * width;
    const double mid_x = 0.5 * (left_x + right_x);
    const double mid_f = state.eval(mid_x);
    const double right_f = state.eval(right_x);
    const double whole = Adapt::simpson(left_x, left_f, mid_f, right_f, right_x);
    const double panel_tol = abs_tol * (right_x - left_x) / (b - a);
    total += state.recurse(left_x, left_f, mid_x, mid_f, right_x, right_f,
                           whole, panel_tol, 0);
    left_x = right_x;
    left_f = right_f;
  }
  result.value = total;
  result.residual = state.residual;
  result.converged = state.converged;
  result.evals = state.evals;
  return result;
}

}  // namespace durm
