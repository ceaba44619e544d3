#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "durm/numerics.hpp"

namespace durm {

struct DenseLayer {
  Matrix W;
  Vector b;
};

// Fully connected ReLU network. Hidden layers use ReLU, the final layer is
// linear; the softmax lives in the loss, not in the model.
struct Mlp {
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const { return layers.front().W.cols; }
  std::size_t output_dim() const { return layers.back().W.rows; }
  std::size_t num_params() const;
};

struct ForwardTrace {
  // inputs[l] is the input fed to layer l; inputs[0] is the sample itself.
  std::vector<Vector> inputs;
  // pre[l] is the pre-activation output of layer l.
  std::vector<Vector> pre;
  Vector logits;
};

struct MlpGradients {
  std::vector<DenseLayer> layers;  // same shapes as the model
  Vector input;                    // d loss / d x, used by adversarial probes

  void scale(double s);
  void add(const MlpGradients& other);
};

// Glorot-uniform weights, zero biases. Layer sizes are
// input_dim -> hidden[0] -> ... -> hidden.back() -> output_dim.
Mlp init_mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
             std::size_t output_dim, std::uint64_t seed);

ForwardTrace forward(const Mlp& model, const Vector& x);

// Backpropagates d loss / d logits through the trace.
MlpGradients backward(const Mlp& model, const ForwardTrace& trace,
                      const Vector& grad_logits);

MlpGradients zero_gradients(const Mlp& model);

std::size_t predict(const Mlp& model, const Vector& x);

// Parameter <-> flat vector round trips, used by the curvature probes.
Vector flatten(const Mlp& model);
void unflatten(const Vector& flat, Mlp& model);

// Binary checkpoint: magic, format version, layer shapes, raw doubles.
void save_checkpoint(const Mlp& model, const std::string& path);
Mlp load_checkpoint(const std::string& path);

}  // namespace durm
