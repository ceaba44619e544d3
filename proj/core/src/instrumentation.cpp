#include "durm/instrumentation.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace durm {

PushPull decompose_push_pull(const std::vector<Vector>& probs,
                             const std::vector<std::size_t>& labels,
                             std::size_t k) {
  if (probs.size() != labels.size()) {
    throw std::invalid_argument("decompose_push_pull: size mismatch");
  }
  PushPull out{0.0, 0.0};
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (k >= probs[i].size()) {
      throw std::invalid_argument("decompose_push_pull: class out of range");
    }
    if (labels[i] == k) {
      out.pull += probs[i][k] - 1.0;
    } else {
      out.push += probs[i][k];
    }
  }
  return out;
}

void record_epoch_gradients(GradientTrace& trace, std::size_t epoch,
                            const std::vector<Vector>& per_sample_loss_grads) {
  if (epoch != trace.grad_sum.size()) {
    throw std::invalid_argument(
        "record_epoch_gradients: epoch already recorded or out of order");
  }
  if (per_sample_loss_grads.empty()) {
    throw std::invalid_argument("record_epoch_gradients: no gradients");
  }
  const std::size_t width = per_sample_loss_grads.front().size();
  const std::size_t n = per_sample_loss_grads.size();

  Vector sum(width, 0.0);
  for (const Vector& g : per_sample_loss_grads) {
    if (g.size() != width) {
      throw std::invalid_argument("record_epoch_gradients: ragged gradients");
    }
    for (std::size_t k = 0; k < width; ++k) sum[k] -= g[k];
  }
  Vector var(width, 0.0);
  if (n > 1) {
    for (std::size_t k = 0; k < width; ++k) {
      const double mean = sum[k] / double(n);
      double acc = 0.0;
      for (const Vector& g : per_sample_loss_grads) {
        const double d = -g[k] - mean;
        acc += d * d;
      }
      var[k] = acc / double(n - 1);
    }
  }
  trace.grad_sum.push_back(std::move(sum));
  trace.grad_var.push_back(std::move(var));
}

double model_distance(const Mlp& params_t, const Mlp& params_0) {
  if (params_t.layers.size() != params_0.layers.size()) {
    throw std::invalid_argument("model_distance: layer count mismatch");
  }
  double acc = 0.0;
  for (std::size_t l = 0; l < params_t.layers.size(); ++l) {
    const DenseLayer& a = params_t.layers[l];
    const DenseLayer& b = params_0.layers[l];
    if (a.W.rows != b.W.rows || a.W.cols != b.W.cols ||
        a.b.size() != b.b.size()) {
      throw std::invalid_argument("model_distance: shape mismatch");
    }
    for (std::size_t i = 0; i < a.W.data.size(); ++i) {
      const double d = a.W.data[i] - b.W.data[i];
      acc += d * d;
    }
    for (std::size_t i = 0; i < a.b.size(); ++i) {
      const double d = a.b[i] - b.b[i];
      acc += d * d;
    }
  }
  return acc;
}

namespace {

Vector random_unit_vector(std::size_t dim, std::mt19937_64& gen) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Vector v(dim);
  double n = 0.0;
  while (n == 0.0) {
    for (double& x : v) x = dist(gen);
    n = norm(v);
  }
  for (double& x : v) x /= n;
  return v;
}

}  // namespace

EigenEstimate power_iteration_top_eigenvalue(
    const std::function<Vector(const Vector&)>& grad_at, const Vector& w0,
    std::size_t iterations, double fd_step, std::uint64_t seed) {
  if (iterations < 10) {
    throw std::invalid_argument(
        "power_iteration_top_eigenvalue: need at least 10 iterations");
  }
  if (!(fd_step > 0.0)) {
    throw std::invalid_argument(
        "power_iteration_top_eigenvalue: fd_step must be > 0");
  }
  std::mt19937_64 gen(seed);
  Vector s = random_unit_vector(w0.size(), gen);

  EigenEstimate est;
  double prev = 0.0;
  bool have_prev = false;
  Vector plus(w0.size());
  Vector minus(w0.size());
  for (std::size_t it = 0; it < iterations; ++it) {
    for (std::size_t i = 0; i < w0.size(); ++i) {
      plus[i] = w0[i] + fd_step * s[i];
      minus[i] = w0[i] - fd_step * s[i];
    }
    const Vector gp = grad_at(plus);
    const Vector gm = grad_at(minus);
    Vector hs(w0.size());
    for (std::size_t i = 0; i < w0.size(); ++i) {
      hs[i] = (gp[i] - gm[i]) / (2.0 * fd_step);
    }
    const double rayleigh = dot(s, hs);
    est.iterations = it + 1;
    if (have_prev) {
      est.converged =
          std::abs(rayleigh - prev) <= 0.01 * std::max(std::abs(rayleigh), 1e-30);
    }
    prev = rayleigh;
    have_prev = true;
    est.rho = rayleigh;
    const double hs_norm = norm(hs);
    if (hs_norm == 0.0) {
      // Zero curvature along every probed direction; nothing left to iterate.
      est.rho = 0.0;
      est.converged = true;
      break;
    }
    for (std::size_t i = 0; i < hs.size(); ++i) s[i] = hs[i] / hs_norm;
  }
  return est;
}

double dataset_mean_loss(const Mlp& model, const Dataset& data,
                         const HeadConfig& head) {
  double acc = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Vector probs = softmax(forward(model, data.row(i)).logits);
    acc += cross_entropy(probs, pad_label(data.labels[i], head));
  }
  return acc / double(data.size());
}

Vector dataset_mean_gradient(const Mlp& model, const Dataset& data,
                             const HeadConfig& head) {
  MlpGradients total = zero_gradients(model);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const ForwardTrace trace = forward(model, data.row(i));
    const Vector probs = softmax(trace.logits);
    const Vector g = grad_logits(probs, pad_label(data.labels[i], head));
    total.add(backward(model, trace, g));
  }
  total.scale(1.0 / double(data.size()));
  Vector flat;
  flat.reserve(model.num_params());
  for (const DenseLayer& layer : total.layers) {
    flat.insert(flat.end(), layer.W.data.begin(), layer.W.data.end());
    flat.insert(flat.end(), layer.b.begin(), layer.b.end());
  }
  return flat;
}

EigenEstimate estimate_top_hessian_eigenvalue(const Mlp& model,
                                              const Dataset& data,
                                              const HeadConfig& head,
                                              std::size_t iterations,
                                              double fd_step,
                                              std::uint64_t seed) {
  Mlp scratch = model;
  auto grad_at = [&](const Vector& w) {
    unflatten(w, scratch);
    return dataset_mean_gradient(scratch, data, head);
  };
  return power_iteration_top_eigenvalue(grad_at, flatten(model), iterations,
                                        fd_step, seed);
}

FlatnessEstimate estimate_flatness(
    const std::function<double(const Vector&)>& loss_at, const Vector& w0,
    double delta, std::size_t trials, std::uint64_t seed) {
  if (!(delta > 0.0)) {
    throw std::invalid_argument("estimate_flatness: delta must be > 0");
  }
  if (trials < 1) {
    throw std::invalid_argument("estimate_flatness: trials must be >= 1");
  }
  std::mt19937_64 gen(seed);
  const double base = loss_at(w0);
  if (!std::isfinite(base)) {
    throw std::runtime_error("estimate_flatness: non-finite base loss");
  }
  double worst = 0.0;
  Vector w(w0.size());
  for (std::size_t t = 0; t < trials; ++t) {
    const Vector dir = random_unit_vector(w0.size(), gen);
    for (std::size_t i = 0; i < w0.size(); ++i) w[i] = w0[i] + delta * dir[i];
    const double perturbed = loss_at(w);
    if (!std::isfinite(perturbed)) {
      throw std::runtime_error("estimate_flatness: non-finite perturbed loss");
    }
    worst = std::max(worst, perturbed - base);
  }
  FlatnessEstimate est;
  est.epsilon_hat = worst;
  est.tau = 1.0 / std::max(worst, 1e-12);
  est.delta = delta;
  return est;
}

FlatnessEstimate estimate_flatness(const Mlp& model, const Dataset& data,
                                   const HeadConfig& head, double delta,
                                   std::size_t trials, std::uint64_t seed) {
  Mlp scratch = model;
  auto loss_at = [&](const Vector& w) {
    unflatten(w, scratch);
    return dataset_mean_loss(scratch, data, head);
  };
  return estimate_flatness(loss_at, flatten(model), delta, trials, seed);
}

}  // namespace durm
