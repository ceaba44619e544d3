#include "durm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "durm/rng.hpp"

namespace durm {

DivergenceError::DivergenceError(std::size_t e, std::size_t s)
    : std::runtime_error("training diverged: non-finite value at epoch " +
                         std::to_string(e) + ", step " + std::to_string(s)),
      epoch(e),
      step(s) {}

void TrainConfig::validate(std::size_t dataset_size) const {
  if (!(learning_rate > 0.0)) {
    throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
  }
  if (momentum < 0.0 || momentum >= 1.0) {
    throw std::invalid_argument("TrainConfig: momentum must be in [0,1)");
  }
  if (weight_decay < 0.0) {
    throw std::invalid_argument("TrainConfig: weight_decay must be >= 0");
  }
  if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
  if (batch_size < 1 || batch_size > dataset_size) {
    throw std::invalid_argument(
        "TrainConfig: batch_size must be in [1, dataset size]");
  }
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw std::invalid_argument("TrainConfig: val_fraction must be in (0,1)");
  }
  if (head.num_classes < 2) {
    throw std::invalid_argument("TrainConfig: need at least 2 classes");
  }
  if (regularizers.ema_decay &&
      (*regularizers.ema_decay < 0.0 || *regularizers.ema_decay > 1.0)) {
    throw std::invalid_argument("TrainConfig: ema decay must be in [0,1]");
  }
  if (regularizers.early_stop_patience && *regularizers.early_stop_patience < 1) {
    throw std::invalid_argument("TrainConfig: early-stop patience must be >= 1");
  }
  if (regularizers.mixup_alpha && !(*regularizers.mixup_alpha > 0.0)) {
    throw std::invalid_argument("TrainConfig: mixup alpha must be > 0");
  }
}

EvalResult evaluate(const Mlp& model, const Dataset& data,
                    const HeadConfig& head) {
  EvalResult out;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Vector x = data.row(i);
    const Vector probs = softmax(forward(model, x).logits);
    out.loss += cross_entropy(probs, pad_label(data.labels[i], head));
    if (predict(model, x) == data.labels[i]) ++correct;
  }
  out.loss /= double(data.size());
  out.accuracy = double(correct) / double(data.size());
  return out;
}

void sgd_step(Mlp& params, const MlpGradients& grads, MlpGradients& velocity,
              double learning_rate, double momentum, double weight_decay) {
  if (params.layers.size() != grads.layers.size() ||
      params.layers.size() != velocity.layers.size()) {
    throw std::invalid_argument("sgd_step: shape mismatch");
  }
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    if (grads.layers[l].W.data.size() != params.layers[l].W.data.size() ||
        grads.layers[l].b.size() != params.layers[l].b.size() ||
        velocity.layers[l].W.data.size() != params.layers[l].W.data.size() ||
        velocity.layers[l].b.size() != params.layers[l].b.size()) {
      throw std::invalid_argument("sgd_step: shape mismatch");
    }
    auto update = [&](Vector& p, const Vector& g, Vector& v) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        if (!std::isfinite(g[i])) {
          throw std::runtime_error("sgd_step: non-finite gradient");
        }
        v[i] = momentum * v[i] -
               learning_rate * (g[i] + weight_decay * p[i]);
        p[i] += v[i];
      }
    };
    update(params.layers[l].W.data, grads.layers[l].W.data,
           velocity.layers[l].W.data);
    update(params.layers[l].b, grads.layers[l].b, velocity.layers[l].b);
  }
}

double gradient_norm(const MlpGradients& grads) {
  double acc = 0.0;
  for (const DenseLayer& layer : grads.layers) {
    for (double g : layer.W.data) acc += g * g;
    for (double g : layer.b) acc += g * g;
  }
  return std::sqrt(acc);
}

void ema_update(EmaState& state, const Mlp& params, double decay) {
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    for (std::size_t i = 0; i < params.layers[l].W.data.size(); ++i) {
      state.shadow.layers[l].W.data[i] =
          decay * state.shadow.layers[l].W.data[i] +
          (1.0 - decay) * params.layers[l].W.data[i];
    }
    for (std::size_t i = 0; i < params.layers[l].b.size(); ++i) {
      state.shadow.layers[l].b[i] = decay * state.shadow.layers[l].b[i] +
                                    (1.0 - decay) * params.layers[l].b[i];
    }
  }
}

void swa_update(SwaState& state, const Mlp& params) {
  ++state.count;
  if (state.count == 1) {
    state.mean = params;
    return;
  }
  const double inv = 1.0 / double(state.count);
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    for (std::size_t i = 0; i < params.layers[l].W.data.size(); ++i) {
      state.mean.layers[l].W.data[i] +=
          (params.layers[l].W.data[i] - state.mean.layers[l].W.data[i]) * inv;
    }
    for (std::size_t i = 0; i < params.layers[l].b.size(); ++i) {
      state.mean.layers[l].b[i] +=
          (params.layers[l].b[i] - state.mean.layers[l].b[i]) * inv;
    }
  }
}

void early_stop_update(EarlyStopState& state, double val_loss,
                       std::size_t patience) {
  if (val_loss < state.best) {
    state.best = val_loss;
    state.since_improvement = 0;
    return;
  }
  ++state.since_improvement;
  if (state.since_improvement >= patience) state.stop = true;
}

double sample_mixup_lambda(double alpha, std::mt19937_64& gen) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  const double a = gamma(gen);
  const double b = gamma(gen);
  if (a + b == 0.0) return 0.5;
  return a / (a + b);
}

TrainResult train(const Dataset& data, const TrainConfig& config) {
  config.validate(data.size());
  if (data.num_classes != config.head.num_classes) {
    throw std::invalid_argument(
        "train: dataset class count does not match the head");
  }

  const Split split = train_test_split(
      data, config.val_fraction, stream_seed(config.seed, kStreamSplit), true);
  const Dataset& tr = split.train;
  const Dataset& va = split.test;
  if (config.batch_size > tr.size()) {
    throw std::invalid_argument(
        "train: batch_size exceeds the post-split training set");
  }

  Mlp model = init_mlp(tr.dim(), config.hidden, config.head.width(),
                       stream_seed(config.seed, kStreamInit));
  const Mlp w0 = model;
  MlpGradients velocity = zero_gradients(model);

  TrainResult result;
  result.mode = config.head.num_dummy == 0 ? "ERM" : "DuRM";
  result.train_class_counts = class_histogram(tr);
  result.flatness.model_distance.push_back(0.0);
  result.flatness.cumulative_grad_norm.push_back(0.0);

  std::mt19937_64 shuffle_gen(stream_seed(config.seed, kStreamShuffle));
  std::mt19937_64 mixup_gen(stream_seed(config.seed, kStreamMixup));

  std::optional<EmaState> ema;
  if (config.regularizers.ema_decay) ema = EmaState{model};
  SwaState swa;
  EarlyStopState stopper;

  std::vector<Vector> padded(tr.size());
  for (std::size_t i = 0; i < tr.size(); ++i) {
    padded[i] = pad_label(tr.labels[i], config.head);
  }

  std::vector<std::size_t> indices(tr.size());
  std::iota(indices.begin(), indices.end(), 0);

  const std::size_t num_dummy = config.head.num_dummy;
  const std::size_t num_classes = config.head.num_classes;
  double best_val = std::numeric_limits<double>::infinity();
  double cum_norm = 0.0;
  std::size_t global_step = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(indices.begin(), indices.end(), shuffle_gen);

    std::vector<Vector> epoch_grads;
    epoch_grads.reserve(tr.size());
    std::vector<std::vector<double>> layer_norms(model.layers.size());
    Vector fraction_sum(num_dummy, 0.0);
    std::size_t underflows = 0;
    double loss_sum = 0.0;

    for (std::size_t start = 0; start < tr.size();
         start += config.batch_size) {
      const std::size_t batch_n =
          std::min(config.batch_size, tr.size() - start);
      std::vector<Vector> bx(batch_n);
      std::vector<Vector> by(batch_n);
      for (std::size_t j = 0; j < batch_n; ++j) {
        const std::size_t idx = indices[start + j];
        bx[j] = tr.row(idx);
        by[j] = padded[idx];
      }
      if (config.regularizers.mixup_alpha) {
        const double lambda =
            sample_mixup_lambda(*config.regularizers.mixup_alpha, mixup_gen);
        std::vector<std::size_t> partner(batch_n);
        std::iota(partner.begin(), partner.end(), 0);
        std::shuffle(partner.begin(), partner.end(), mixup_gen);
        std::vector<Vector> mx(batch_n), my(batch_n);
        for (std::size_t j = 0; j < batch_n; ++j) {
          mx[j].resize(bx[j].size());
          my[j].resize(by[j].size());
          for (std::size_t i = 0; i < bx[j].size(); ++i) {
            mx[j][i] = lambda * bx[j][i] + (1.0 - lambda) * bx[partner[j]][i];
          }
          for (std::size_t i = 0; i < by[j].size(); ++i) {
            my[j][i] = lambda * by[j][i] + (1.0 - lambda) * by[partner[j]][i];
          }
        }
        bx = std::move(mx);
        by = std::move(my);
      }

      MlpGradients batch_grad = zero_gradients(model);
      for (std::size_t j = 0; j < batch_n; ++j) {
        const ForwardTrace ft = forward(model, bx[j]);
        for (double z : ft.logits) {
          if (!std::isfinite(z)) throw DivergenceError(epoch, global_step);
        }
        const Vector probs = softmax(ft.logits);
        const double loss = cross_entropy(probs, by[j]);
        if (!std::isfinite(loss)) throw DivergenceError(epoch, global_step);
        loss_sum += loss;
        const Vector g = grad_logits(probs, by[j]);
        MlpGradients sample_grad = backward(model, ft, g);

        epoch_grads.push_back(g);
        for (std::size_t l = 0; l < model.layers.size(); ++l) {
          double acc = 0.0;
          for (double w : sample_grad.layers[l].W.data) acc += w * w;
          for (double b : sample_grad.layers[l].b) acc += b * b;
          layer_norms[l].push_back(std::sqrt(acc));
        }
        if (num_dummy > 0) {
          const Vector dummy_mass(probs.begin() + long(num_classes),
                                  probs.end());
          const GradientFraction fr = gradient_fraction(dummy_mass);
          if (fr.underflow) ++underflows;
          for (std::size_t d = 0; d < num_dummy; ++d) {
            fraction_sum[d] += fr.fractions[d];
          }
        }
        batch_grad.add(sample_grad);
      }
      batch_grad.scale(1.0 / double(batch_n));

      const double gnorm = gradient_norm(batch_grad);
      if (!std::isfinite(gnorm)) throw DivergenceError(epoch, global_step);
      result.trace.step_grad_norm.push_back(gnorm);
      cum_norm += gnorm;

      sgd_step(model, batch_grad, velocity, config.learning_rate,
               config.momentum, config.weight_decay);
      for (const DenseLayer& layer : model.layers) {
        for (double w : layer.W.data) {
          if (!std::isfinite(w)) throw DivergenceError(epoch, global_step);
        }
        for (double b : layer.b) {
          if (!std::isfinite(b)) throw DivergenceError(epoch, global_step);
        }
      }
      ++global_step;
    }

    record_epoch_gradients(result.trace, epoch, epoch_grads);
    Vector layer_var(model.layers.size(), 0.0);
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
      const auto& vals = layer_norms[l];
      if (vals.size() > 1) {
        const double mean =
            std::accumulate(vals.begin(), vals.end(), 0.0) / double(vals.size());
        double acc = 0.0;
        for (double v : vals) acc += (v - mean) * (v - mean);
        layer_var[l] = acc / double(vals.size() - 1);
      }
    }
    result.trace.layer_grad_var.push_back(std::move(layer_var));
    if (num_dummy > 0) {
      Vector mean_fraction(num_dummy);
      for (std::size_t d = 0; d < num_dummy; ++d) {
        mean_fraction[d] = fraction_sum[d] / double(tr.size());
      }
      result.trace.dummy_fraction_mean.push_back(std::move(mean_fraction));
    } else {
      result.trace.dummy_fraction_mean.emplace_back();
    }
    result.trace.dummy_fraction_underflows.push_back(underflows);

    result.flatness.model_distance.push_back(model_distance(model, w0));
    result.flatness.cumulative_grad_norm.push_back(cum_norm);
    result.running_loss.push_back(loss_sum / double(tr.size()));

    const EvalResult on_train = evaluate(model, tr, config.head);
    const EvalResult on_val = evaluate(model, va, config.head);
    result.train_loss.push_back(on_train.loss);
    result.train_acc.push_back(on_train.accuracy);
    result.val_loss.push_back(on_val.loss);
    result.val_acc.push_back(on_val.accuracy);

    if (ema) ema_update(*ema, model, *config.regularizers.ema_decay);
    if (config.regularizers.swa_start_epoch &&
        epoch >= *config.regularizers.swa_start_epoch) {
      swa_update(swa, model);
    }

    if (on_val.loss < best_val) {
      best_val = on_val.loss;
      result.best_model = model;
      result.best_epoch = epoch;
    }
    result.completed_epochs = epoch + 1;

    if (config.regularizers.early_stop_patience) {
      early_stop_update(stopper, on_val.loss,
                        *config.regularizers.early_stop_patience);
      if (stopper.stop) {
        result.early_stopped = true;
        break;
      }
    }
  }

  result.final_model = std::move(model);
  if (ema) result.ema_model = std::move(ema->shadow);
  if (swa.count > 0) result.swa_model = std::move(swa.mean);
  return result;
}

namespace {

double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

Vector input_gradient(const Mlp& model, const Vector& x, const Vector& target) {
  const ForwardTrace ft = forward(model, x);
  const Vector probs = softmax(ft.logits);
  MlpGradients grads = backward(model, ft, grad_logits(probs, target));
  for (double v : grads.input) {
    if (!std::isfinite(v)) {
      throw std::runtime_error("adversarial_perturb: non-finite input gradient");
    }
  }
  return std::move(grads.input);
}

}  // namespace

Vector adversarial_perturb(AttackMode mode, const Mlp& model,
                           const HeadConfig& head, const Vector& x,
                           std::size_t y, double epsilon, std::size_t steps,
                           double step_size, const Vector& clip_lo,
                           const Vector& clip_hi) {
  if (epsilon < 0.0) {
    throw std::invalid_argument("adversarial_perturb: epsilon must be >= 0");
  }
  if (mode == AttackMode::pgd && steps < 1) {
    throw std::invalid_argument("adversarial_perturb: pgd needs steps >= 1");
  }
  if (clip_lo.size() != x.size() || clip_hi.size() != x.size()) {
    throw std::invalid_argument("adversarial_perturb: clip range mismatch");
  }
  const Vector target = pad_label(y, head);
  auto clip_range = [&](Vector& v) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = std::clamp(v[i], clip_lo[i], clip_hi[i]);
    }
  };

  if (mode == AttackMode::fgsm) {
    const Vector g = input_gradient(model, x, target);
    Vector out = x;
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] += epsilon * sign_of(g[i]);
    }
    clip_range(out);
    return out;
  }

  Vector cur = x;
  for (std::size_t s = 0; s < steps; ++s) {
    const Vector g = input_gradient(model, cur, target);
    for (std::size_t i = 0; i < cur.size(); ++i) {
      cur[i] += step_size * sign_of(g[i]);
      cur[i] = std::clamp(cur[i], x[i] - epsilon, x[i] + epsilon);
    }
    clip_range(cur);
  }
  return cur;
}

std::pair<Vector, Vector> feature_range(const Dataset& data) {
  Vector lo(data.dim(), std::numeric_limits<double>::infinity());
  Vector hi(data.dim(), -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t d = 0; d < data.dim(); ++d) {
      lo[d] = std::min(lo[d], data.features(i, d));
      hi[d] = std::max(hi[d], data.features(i, d));
    }
  }
  return {lo, hi};
}

EvalResult evaluate_adversarial(const Mlp& model, const Dataset& data,
                                const HeadConfig& head, AttackMode mode,
                                double epsilon, std::size_t steps,
                                double step_size, const Vector& clip_lo,
                                const Vector& clip_hi) {
  EvalResult out;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Vector adv =
        adversarial_perturb(mode, model, head, data.row(i), data.labels[i],
                            epsilon, steps, step_size, clip_lo, clip_hi);
    const Vector probs = softmax(forward(model, adv).logits);
    out.loss += cross_entropy(probs, pad_label(data.labels[i], head));
    if (predict(model, adv) == data.labels[i]) ++correct;
  }
  out.loss /= double(data.size());
  out.accuracy = double(correct) / double(data.size());
  return out;
}

}  // namespace durm
