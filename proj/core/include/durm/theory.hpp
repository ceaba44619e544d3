#pragma once

#include <cstddef>
#include <cstdint>

namespace durm {

// Two-component Gaussian model of per-class logit gradients: a share alpha
// of samples are negatives with gradient mean -mu_n, the rest positives with
// gradient mean 1 - mu_p (mu_n, mu_p are prediction-probability means). The
// dummy head adds an independent zero-mean perturbation of std sigma_d.
struct GradientMixture {
  double alpha = 0.5;
  double mu_n = 0.5;
  double sigma_n = 1.0;
  double mu_p = 0.5;
  double sigma_p = 1.0;
  double sigma_d = 0.0;

  void validate() const;  // throws std::invalid_argument
};

// Gaussian model of the per-step gradient statistic whose minimum over T
// training steps is studied.
struct OrderStatsSpec {
  double mu = 0.0;
  double sigma = 1.0;
  std::size_t T = 1;

  void validate() const;
};

double normal_pdf(double x, double mu, double sigma);
// CDF via the complementary error function; max error a few ulp (<= 1e-12).
double normal_cdf(double x, double mu, double sigma);
// log(1 - Phi(z)) for the standard normal, stable far into the upper tail
// (asymptotic expansion beyond the range of erfc).
double normal_log_survival(double z);

// Density alpha*phi(g; -mu_n, sigma_n^2) + (1-alpha)*phi(g; 1-mu_p, sigma_p^2).
double mixture_pdf(const GradientMixture& m, double g);

// alpha*(-mu_n) + (1-alpha)*(1-mu_p); independent of sigma_d.
double mixture_mean(const GradientMixture& m);

struct VariancePair {
  double var_erm;
  double var_durm;
};

// var_erm = alpha^2 sigma_n^2 + (1-alpha)^2 sigma_p^2;
// var_durm adds sigma_d^2 on top.
VariancePair durm_variance(const GradientMixture& m);

struct GaussianProduct {
  double mean;
  double var;
  double scale;  // f1(x) * f2(x) == scale * phi(x; mean, var)
};

GaussianProduct gaussian_product_params(double mu1, double s1, double mu2,
                                        double s2);

// Distribution of the minimum of T independent draws described by an
// OrderStatsSpec:
// cdf = 1 - [1 - F(g)]^T, pdf = T [1 - F(g)]^{T-1} f(g). The survival power
// switches to log space for T > 1000.
double min_order_pdf(const OrderStatsSpec& spec, double g);
double min_order_cdf(const OrderStatsSpec& spec, double g);

enum class ProbMethod { quadrature, monte_carlo };

struct ProbEstimate {
  double value = 0.0;
  double residual = 0.0;   // quadrature error estimate
  double std_error = 0.0;  // Monte Carlo binomial standard error
  bool converged = true;   // quadrature residual below 1e-8
  std::size_t budget_used = 0;
};

// P(min of T draws from `erm` >= min of T draws from `durm`). Quadrature
// evaluates T * integral of [1-F_erm]^T [1-F_durm]^{T-1} f_durm; Monte Carlo
// simulates `budget` independent replica pairs (ties count toward >=) on a
// fixed chunked seed schedule, so results do not depend on execution order.
ProbEstimate prob_min_ge(const OrderStatsSpec& erm_spec,
                         const OrderStatsSpec& durm_spec, ProbMethod method,
                         std::size_t budget, std::uint64_t seed);

}  // namespace durm
