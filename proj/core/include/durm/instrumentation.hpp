#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "durm/data.hpp"
#include "durm/durm_head.hpp"
#include "durm/model.hpp"
#include "durm/numerics.hpp"

namespace durm {

struct GradientTrace {
  // Per epoch, per output class: sum over the epoch's samples of the class's
  // logit gradient, stored as y_k - p_k. record_epoch_gradients receives the
  // loss gradients p - y (the convention backward consumes) and negates, so
  // -grad_sum[e][k] is the push + pull total of that epoch.
  std::vector<Vector> grad_sum;
  // Unbiased (divisor N-1) within-epoch variance of the per-sample values.
  std::vector<Vector> grad_var;
  // Per epoch: mean over training samples of each dummy class's share of the
  // dummy probability mass; empty when the head has no dummy classes.
  std::vector<Vector> dummy_fraction_mean;
  // Per epoch: how many samples had all-zero dummy mass (underflow).
  std::vector<std::size_t> dummy_fraction_underflows;
  // Per epoch, per layer: within-epoch variance of the per-sample gradient
  // norm of the layer's parameters.
  std::vector<Vector> layer_grad_var;
  // Per optimization step: norm of the batch-mean parameter gradient.
  std::vector<double> step_grad_norm;

  std::size_t epochs() const { return grad_sum.size(); }
};

struct FlatnessReport {
  // Entry e is the squared parameter distance to initialization after e
  // epochs; entry 0 is therefore 0. Length = completed epochs + 1.
  std::vector<double> model_distance;
  // Running sum of step gradient norms at each epoch boundary, same length.
  std::vector<double> cumulative_grad_norm;
  double rho = 0.0;
  bool rho_converged = true;
  double epsilon_hat = 0.0;
  double tau = 0.0;
  double delta = 0.0;
};

struct PushPull {
  double push;
  double pull;
};

// Split of class k's summed (negated) logit gradient over a set of samples:
// push = sum of p_k over samples with label != k, pull = sum of (p_k - 1)
// over samples with label == k, so push + pull == sum of (p_k - y_k).
PushPull decompose_push_pull(const std::vector<Vector>& probs,
                             const std::vector<std::size_t>& labels,
                             std::size_t k);

// Aggregates one epoch's per-sample loss gradients (p - y per class) into
// the trace. Throws if `epoch` is not the next unrecorded epoch.
void record_epoch_gradients(GradientTrace& trace, std::size_t epoch,
                            const std::vector<Vector>& per_sample_loss_grads);

// Squared parameter distance: sum over all weights and biases of the
// element-wise difference squared.
double model_distance(const Mlp& params_t, const Mlp& params_0);

struct EigenEstimate {
  double rho = 0.0;
  // False when the last two Rayleigh estimates still differ by more than 1%.
  bool converged = true;
  std::size_t iterations = 0;
};

// Power iteration on finite-difference Hessian-vector products of a scalar
// loss whose gradient is supplied as a callable over flat parameters:
// H s ~= (grad(w + h s) - grad(w - h s)) / (2 h). Returns the Rayleigh
// quotient after the final iteration.
EigenEstimate power_iteration_top_eigenvalue(
    const std::function<Vector(const Vector&)>& grad_at, const Vector& w0,
    std::size_t iterations, double fd_step, std::uint64_t seed);

// Same probe over the mean cross-entropy of a model on a dataset.
EigenEstimate estimate_top_hessian_eigenvalue(const Mlp& model,
                                              const Dataset& data,
                                              const HeadConfig& head,
                                              std::size_t iterations,
                                              double fd_step,
                                              std::uint64_t seed);

struct FlatnessEstimate {
  double epsilon_hat = 0.0;
  double tau = 0.0;
  double delta = 0.0;
};

// Draws `trials` isotropic directions rescaled to norm exactly delta and
// reports the largest loss increase (clipped below at 0) plus its inverse,
// capped at 1e12 via the 1e-12 floor on epsilon_hat.
FlatnessEstimate estimate_flatness(const std::function<double(const Vector&)>& loss_at,
                                   const Vector& w0, double delta,
                                   std::size_t trials, std::uint64_t seed);

FlatnessEstimate estimate_flatness(const Mlp& model, const Dataset& data,
                                   const HeadConfig& head, double delta,
                                   std::size_t trials, std::uint64_t seed);

// Mean cross-entropy of the model over the dataset with padded labels.
double dataset_mean_loss(const Mlp& model, const Dataset& data,
                         const HeadConfig& head);

// Flat (flatten-ordered) gradient of dataset_mean_loss at the model's
// current parameters.
Vector dataset_mean_gradient(const Mlp& model, const Dataset& data,
                             const HeadConfig& head);

}  // namespace durm
