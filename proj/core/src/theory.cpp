#include "durm/theory.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "durm/quadrature.hpp"
#include "durm/rng.hpp"

namespace durm {

namespace {
constexpr double kSqrt2 = std::numbers::sqrt2;
constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)
}  // namespace

void GradientMixture::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("GradientMixture: alpha must be in (0,1)");
  }
  if (!(sigma_n > 0.0) || !(sigma_p > 0.0)) {
    throw std::invalid_argument("GradientMixture: component stds must be > 0");
  }
  if (sigma_d < 0.0) {
    throw std::invalid_argument("GradientMixture: sigma_d must be >= 0");
  }
}

void OrderStatsSpec::validate() const {
  if (!(sigma > 0.0)) {
    throw std::invalid_argument("OrderStatsSpec: sigma must be > 0");
  }
  if (T < 1) throw std::invalid_argument("OrderStatsSpec: T must be >= 1");
}

double normal_pdf(double x, double mu, double sigma) {
  const double z = (x - mu) / sigma;
  return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * std::numbers::pi));
}

double normal_cdf(double x, double mu, double sigma) {
  return 0.5 * std::erfc(-(x - mu) / (sigma * kSqrt2));
}

double normal_log_survival(double z) {
  if (z <= 0.0) {
    // Survival >= 1/2 here; log1p of the (small) CDF keeps full precision.
    return std::log1p(-0.5 * std::erfc(-z / kSqrt2));
  }
  const double e = 0.5 * std::erfc(z / kSqrt2);
  if (e >= 1e-290) return std::log(e);
  // Far tail, below erfc's range: Mills-ratio asymptotic expansion
  // S(z) ~ phi(z)/z * (1 - 1/z^2 + 3/z^4 - 15/z^6).
  const double z2 = z * z;
  const double series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
  return -0.5 * z2 - std::log(z) - 0.5 * kLog2Pi + std::log(series);
}

double mixture_pdf(const GradientMixture& m, double g) {
  m.validate();
  return m.alpha * normal_pdf(g, -m.mu_n, m.sigma_n) +
         (1.0 - m.alpha) * normal_pdf(g, 1.0 - m.mu_p, m.sigma_p);
}

double mixture_mean(const GradientMixture& m) {
  m.validate();
  return m.alpha * (-m.mu_n) + (1.0 - m.alpha) * (1.0 - m.mu_p);
}

VariancePair durm_variance(const GradientMixture& m) {
  m.validate();
  VariancePair v;
  v.var_erm = m.alpha * m.alpha * m.sigma_n * m.sigma_n +
              (1.0 - m.alpha) * (1.0 - m.alpha) * m.sigma_p * m.sigma_p;
  v.var_durm = v.var_erm + m.sigma_d * m.sigma_d;
  return v;
}

GaussianProduct gaussian_product_params(double mu1, double s1, double mu2,
                                        double s2) {
  if (!(s1 > 0.0) || !(s2 > 0.0)) {
    throw std::invalid_argument("gaussian_product_params: stds must be > 0");
  }
  const double v1 = s1 * s1;
  const double v2 = s2 * s2;
  GaussianProduct out;
  out.mean = (mu1 * v2 + mu2 * v1) / (v1 + v2);
  out.var = v1 * v2 / (v1 + v2);
  const double d = mu1 - mu2;
  out.scale = std::exp(-d * d / (2.0 * v1 + 2.0 * v2)) /
              (2.0 * std::numbers::pi * s1 * s2) *
              std::sqrt(2.0 * std::numbers::pi * out.var);
  return out;
}

double min_order_pdf(const OrderStatsSpec& spec, double g) {
  spec.validate();
  const double z = (g - spec.mu) / spec.sigma;
  const double f = normal_pdf(g, spec.mu, spec.sigma);
  if (spec.T == 1) return f;
  if (spec.T <= 1000) {
    const double s = 0.5 * std::erfc(z / kSqrt2);
    return double(spec.T) * std::pow(s, double(spec.T - 1)) * f;
  }
  const double log_term = std::log(double(spec.T)) +
                          double(spec.T - 1) * normal_log_survival(z);
  if (log_term < -700.0) return 0.0;
  return std::exp(log_term) * f;
}

double min_order_cdf(const OrderStatsSpec& spec, double g) {
  spec.validate();
  const double z = (g - spec.mu) / spec.sigma;
  if (spec.T <= 1000) {
    const double s = 0.5 * std::erfc(z / kSqrt2);
    return 1.0 - std::pow(s, double(spec.T));
  }
  return -std::expm1(double(spec.T) * normal_log_survival(z));
}

namespace {

ProbEstimate prob_min_ge_quadrature(const OrderStatsSpec& erm_spec,
                                    const OrderStatsSpec& durm_spec,
                                    std::size_t budget) {
  const double s_max = std::max(erm_spec.sigma, durm_spec.sigma);
  const double lo = std::min(erm_spec.mu, durm_spec.mu) - 12.0 * s_max;
  const double hi = std::max(erm_spec.mu, durm_spec.mu) + 12.0 * s_max;
  const double T = double(erm_spec.T);
  const double log_T = std::log(T);

  auto integrand = [&](double x) {
    const double z1 = (x - erm_spec.mu) / erm_spec.sigma;
    const double z2 = (x - durm_spec.mu) / durm_spec.sigma;
    const double log_pdf2 =
        -0.5 * z2 * z2 - std::log(durm_spec.sigma) - 0.5 * kLog2Pi;
    const double log_term = log_T + T * normal_log_survival(z1) +
                            (T - 1.0) * normal_log_survival(z2) + log_pdf2;
    return log_term < -745.0 ? 0.0 : std::exp(log_term);
  };

  const QuadResult q = integrate(integrand, lo, hi, 1e-10, budget);
  ProbEstimate est;
  est.value = q.value;
  est.residual = q.residual;
  est.converged = q.converged && q.residual <= 1e-8;
  est.budget_used = q.evals;
  return est;
}

ProbEstimate prob_min_ge_monte_carlo(const OrderStatsSpec& erm_spec,
                                     const OrderStatsSpec& durm_spec,
                                     std::size_t budget, std::uint64_t seed) {
  constexpr std::size_t kChunk = 1u << 16;
  std::size_t done = 0;
  std::size_t wins = 0;
  std::uint64_t chunk_index = 0;
  while (done < budget) {
    const std::size_t n = std::min(kChunk, budget - done);
    std::mt19937_64 gen(stream_seed(seed, kStreamMonteCarlo + chunk_index));
    std::normal_distribution<double> d_erm(erm_spec.mu, erm_spec.sigma);
    std::normal_distribution<double> d_durm(durm_spec.mu, durm_spec.sigma);
    for (std::size_t r = 0; r < n; ++r) {
      double m1 = d_erm(gen);
      for (std::size_t t = 1; t < erm_spec.T; ++t) {
        m1 = std::min(m1, d_erm(gen));
      }
      double m2 = d_durm(gen);
      for (std::size_t t = 1; t < durm_spec.T; ++t) {
        m2 = std::min(m2, d_durm(gen));
      }
      if (m1 >= m2) ++wins;
    }
    done += n;
    ++chunk_index;
  }
  ProbEstimate est;
  est.value = double(wins) / double(budget);
  est.std_error = std::sqrt(est.value * (1.0 - est.value) / double(budget));
  est.budget_used = budget;
  return est;
}

}  // namespace

ProbEstimate prob_min_ge(const OrderStatsSpec& erm_spec,
                         const OrderStatsSpec& durm_spec, ProbMethod method,
                         std::size_t budget, std::uint64_t seed) {
  erm_spec.validate();
  durm_spec.validate();
  if (erm_spec.T != durm_spec.T) {
    throw std::invalid_argument("prob_min_ge: specs must share T");
  }
  if (budget == 0) throw std::invalid_argument("prob_min_ge: budget must be > 0");
  if (method == ProbMethod::quadrature) {
    return prob_min_ge_quadrature(erm_spec, durm_spec, budget);
  }
  return prob_min_ge_monte_carlo(erm_spec, durm_spec, budget, seed);
}

}  // namespace durm
