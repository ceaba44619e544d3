#include "durm/model.hpp"

#include <cassert>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

namespace durm {

namespace {
constexpr char kCheckpointMagic[8] = {'D', 'U', 'R', 'M', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;
}  // namespace

std::size_t Mlp::num_params() const {
  std::size_t n = 0;
  for (const auto& layer : layers) n += layer.W.data.size() + layer.b.size();
  return n;
}

void MlpGradients::scale(double s) {
  for (auto& layer : layers) {
    for (double& w : layer.W.data) w *= s;
    for (double& b : layer.b) b *= s;
  }
  for (double& g : input) g *= s;
}

void MlpGradients::add(const MlpGradients& other) {
  assert(layers.size() == other.layers.size());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    for (std::size_t i = 0; i < layers[l].W.data.size(); ++i) {
      layers[l].W.data[i] += other.layers[l].W.data[i];
    }
    for (std::size_t i = 0; i < layers[l].b.size(); ++i) {
      layers[l].b[i] += other.layers[l].b[i];
    }
  }
  for (std::size_t i = 0; i < input.size(); ++i) input[i] += other.input[i];
}

Mlp init_mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
             std::size_t output_dim, std::uint64_t seed) {
  std::vector<std::size_t> sizes;
  sizes.push_back(input_dim);
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(output_dim);

  std::mt19937_64 gen(seed);
  Mlp model;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    DenseLayer layer;
    layer.W = Matrix(sizes[l + 1], sizes[l]);
    layer.b = Vector(sizes[l + 1], 0.0);
    const double limit = std::sqrt(6.0 / double(sizes[l] + sizes[l + 1]));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (double& w : layer.W.data) w = dist(gen);
    model.layers.push_back(std::move(layer));
  }
  return model;
}

ForwardTrace forward(const Mlp& model, const Vector& x) {
  ForwardTrace trace;
  Vector cur = x;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    trace.inputs.push_back(cur);
    Vector z = affine(model.layers[l].W, cur, model.layers[l].b);
    trace.pre.push_back(z);
    if (l + 1 < model.layers.size()) {
      for (double& v : z) v = v > 0.0 ? v : 0.0;
    }
    cur = std::move(z);
  }
  trace.logits = cur;
  return trace;
}

MlpGradients zero_gradients(const Mlp& model) {
  MlpGradients grads;
  for (const auto& layer : model.layers) {
    DenseLayer g;
    g.W = Matrix(layer.W.rows, layer.W.cols);
    g.b = Vector(layer.b.size(), 0.0);
    grads.layers.push_back(std::move(g));
  }
  grads.input = Vector(model.input_dim(), 0.0);
  return grads;
}

MlpGradients backward(const Mlp& model, const ForwardTrace& trace,
                      const Vector& grad_logits) {
  if (grad_logits.size() != model.output_dim() ||
      trace.inputs.size() != model.layers.size() ||
      trace.pre.size() != model.layers.size() ||
      trace.logits.size() != model.output_dim()) {
    throw std::invalid_argument("backward: trace does not match model");
  }
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    if (trace.inputs[l].size() != model.layers[l].W.cols ||
        trace.pre[l].size() != model.layers[l].W.rows) {
      throw std::invalid_argument("backward: trace does not match model");
    }
  }
  MlpGradients grads = zero_gradients(model);

  Vector delta = grad_logits;
  for (std::size_t l = model.layers.size(); l-- > 0;) {
    const DenseLayer& layer = model.layers[l];
    if (l + 1 < model.layers.size()) {
      // ReLU mask on the layer's pre-activation.
      for (std::size_t i = 0; i < delta.size(); ++i) {
        if (trace.pre[l][i] <= 0.0) delta[i] = 0.0;
      }
    }
    const Vector& in = trace.inputs[l];
    DenseLayer& g = grads.layers[l];
    for (std::size_t r = 0; r < layer.W.rows; ++r) {
      const double d = delta[r];
      g.b[r] = d;
      double* grow = &g.W.data[r * layer.W.cols];
      for (std::size_t c = 0; c < layer.W.cols; ++c) grow[c] = d * in[c];
    }
    Vector next(layer.W.cols, 0.0);
    for (std::size_t r = 0; r < layer.W.rows; ++r) {
      const double d = delta[r];
      const double* row = &layer.W.data[r * layer.W.cols];
      for (std::size_t c = 0; c < layer.W.cols; ++c) next[c] += d * row[c];
    }
    delta = std::move(next);
  }
  grads.input = std::move(delta);
  return grads;
}

std::size_t predict(const Mlp& model, const Vector& x) {
  const Vector logits = forward(model, x).logits;
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  return best;
}

Vector flatten(const Mlp& model) {
  Vector flat;
  flat.reserve(model.num_params());
  for (const auto& layer : model.layers) {
    flat.insert(flat.end(), layer.W.data.begin(), layer.W.data.end());
    flat.insert(flat.end(), layer.b.begin(), layer.b.end());
  }
  return flat;
}

void unflatten(const Vector& flat, Mlp& model) {
  if (flat.size() != model.num_params()) {
    throw std::invalid_argument("unflatten: size mismatch");
  }
  std::size_t pos = 0;
  for (auto& layer : model.layers) {
    std::memcpy(layer.W.data.data(), &flat[pos],
                layer.W.data.size() * sizeof(double));
    pos += layer.W.data.size();
    std::memcpy(layer.b.data(), &flat[pos], layer.b.size() * sizeof(double));
    pos += layer.b.size();
  }
}

void save_checkpoint(const Mlp& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for write: " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  auto write_u32 = [&out](std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  };
  write_u32(kCheckpointVersion);
  write_u32(static_cast<std::uint32_t>(model.layers.size()));
  for (const auto& layer : model.layers) {
    write_u32(static_cast<std::uint32_t>(layer.W.rows));
    write_u32(static_cast<std::uint32_t>(layer.W.cols));
  }
  for (const auto& layer : model.layers) {
    out.write(reinterpret_cast<const char*>(layer.W.data.data()),
              static_cast<std::streamsize>(layer.W.data.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(layer.b.data()),
              static_cast<std::streamsize>(layer.b.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

Mlp load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint for read: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw std::runtime_error("not a checkpoint file: " + path);
  }
  auto read_u32 = [&in, &path]() {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw std::runtime_error("truncated checkpoint: " + path);
    return v;
  };
  const std::uint32_t version = read_u32();
  if (version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version in " + path);
  }
  const std::uint32_t num_layers = read_u32();
  Mlp model;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> shapes;
  for (std::uint32_t l = 0; l < num_layers; ++l) {
    const std::uint32_t rows = read_u32();
    const std::uint32_t cols = read_u32();
    shapes.emplace_back(rows, cols);
  }
  for (const auto& [rows, cols] : shapes) {
    DenseLayer layer;
    layer.W = Matrix(rows, cols);
    layer.b = Vector(rows, 0.0);
    in.read(reinterpret_cast<char*>(layer.W.data.data()),
            static_cast<std::streamsize>(layer.W.data.size() * sizeof(double)));
    in.read(reinterpret_cast<char*>(layer.b.data()),
            static_cast<std::streamsize>(layer.b.size() * sizeof(double)));
    if (!in) throw std::runtime_error("truncated checkpoint: " + path);
    model.layers.push_back(std::move(layer));
  }
  return model;
}

}  // namespace durm
