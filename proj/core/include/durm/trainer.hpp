#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "durm/data.hpp"
#include "durm/durm_head.hpp"
#include "durm/instrumentation.hpp"
#include "durm/model.hpp"

namespace durm {

struct Regularizers {
  std::optional<std::size_t> early_stop_patience;
  std::optional<double> ema_decay;
  std::optional<std::size_t> swa_start_epoch;
  std::optional<double> mixup_alpha;
};

struct TrainConfig {
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t epochs = 200;
  std::size_t batch_size = 8;
  std::uint64_t seed = 7;
  // Share of the input dataset held out (stratified) for validation.
  double val_fraction = 0.2;
  std::vector<std::size_t> hidden = {8};
  Regularizers regularizers;
  HeadConfig head;

  void validate(std::size_t dataset_size) const;
};

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

struct TrainResult {
  Mlp final_model;
  Mlp best_model;  // lowest validation loss seen
  std::size_t best_epoch = 0;
  std::optional<Mlp> ema_model;
  std::optional<Mlp> swa_model;
  // Per completed epoch. train/val entries are end-of-epoch full passes;
  // running_loss is the mean loss over the samples as they were trained.
  std::vector<double> train_loss, train_acc, val_loss, val_acc, running_loss;
  GradientTrace trace;
  // Distance and cumulative-norm series; the curvature probes stay zero
  // until a caller runs them on a checkpoint.
  FlatnessReport flatness;
  std::size_t completed_epochs = 0;
  bool early_stopped = false;
  std::string mode;  // "ERM" when the head has no dummy classes, else "DuRM"
  // Class histogram of the internal training split (after validation
  // hold-out), e.g. for fitting the mixture coefficient alpha.
  std::vector<std::size_t> train_class_counts;
};

// Non-finite loss or gradient during training, with its location.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t epoch, std::size_t step);
  std::size_t epoch;
  std::size_t step;
};

// Mini-batch SGD on a ReLU net with the enlarged head. Deterministic per
// (data, config): init, validation split, shuffling, and mixup each draw
// from their own seed stream.
TrainResult train(const Dataset& data, const TrainConfig& config);

EvalResult evaluate(const Mlp& model, const Dataset& data,
                    const HeadConfig& head);

// velocity <- momentum*velocity - lr*(grad + weight_decay*param);
// param <- param + velocity.
void sgd_step(Mlp& params, const MlpGradients& grads, MlpGradients& velocity,
              double learning_rate, double momentum, double weight_decay);

// Norm of the parameter gradients (the input-gradient slot is ignored).
double gradient_norm(const MlpGradients& grads);

struct EmaState {
  Mlp shadow;
};
void ema_update(EmaState& state, const Mlp& params, double decay);

struct SwaState {
  Mlp mean;
  std::size_t count = 0;
};
void swa_update(SwaState& state, const Mlp& params);

struct EarlyStopState {
  double best = std::numeric_limits<double>::infinity();
  std::size_t since_improvement = 0;
  bool stop = false;
};
void early_stop_update(EarlyStopState& state, double val_loss,
                       std::size_t patience);

// Beta(alpha, alpha) draw via two gamma variates.
double sample_mixup_lambda(double alpha, std::mt19937_64& gen);

enum class AttackMode { fgsm, pgd };

// fgsm: x + epsilon*sign(grad_x loss), clipped to [clip_lo, clip_hi].
// pgd: `steps` sign steps of size step_size, each projected into the
// L-infinity ball of radius epsilon around x and range-clipped.
Vector adversarial_perturb(AttackMode mode, const Mlp& model,
                           const HeadConfig& head, const Vector& x,
                           std::size_t y, double epsilon, std::size_t steps,
                           double step_size, const Vector& clip_lo,
                           const Vector& clip_hi);

// Per-dimension (min, max) over the dataset's features, the default
// clipping range for adversarial_perturb.
std::pair<Vector, Vector> feature_range(const Dataset& data);

EvalResult evaluate_adversarial(const Mlp& model, const Dataset& data,
                                const HeadConfig& head, AttackMode mode,
                                double epsilon, std::size_t steps,
                                double step_size, const Vector& clip_lo,
                                const Vector& clip_hi);

}  // namespace durm
