#include "durm/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace durm {

Vector softmax(const Vector& logits) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty input");
  for (double z : logits) {
    if (!std::isfinite(z)) throw std::invalid_argument("softmax: non-finite logit");
  }
  const double m = *std::max_element(logits.begin(), logits.end());
  Vector out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    sum += out[i];
  }
  for (double& p : out) p /= sum;
  return out;
}

double cross_entropy(const Vector& probs, const Vector& target) {
  if (probs.size() != target.size()) {
    throw std::invalid_argument("cross_entropy: length mismatch");
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (target[i] != 0.0) {
      loss -= target[i] * std::log(std::max(probs[i], kProbFloor));
    }
  }
  return loss;
}

Vector grad_logits(const Vector& probs, const Vector& target) {
  if (probs.size() != target.size()) {
    throw std::invalid_argument("grad_logits: length mismatch");
  }
  Vector g(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) g[i] = probs[i] - target[i];
  return g;
}

Vector affine(const Matrix& W, const Vector& x, const Vector& b) {
  if (W.cols != x.size() || W.rows != b.size()) {
    throw std::invalid_argument("affine: shape mismatch");
  }
  Vector y(W.rows);
  for (std::size_t r = 0; r < W.rows; ++r) {
    double acc = b[r];
    const double* row = &W.data[r * W.cols];
    for (std::size_t c = 0; c < W.cols; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
  return y;
}

double dot(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm(const Vector& v) { return std::sqrt(dot(v, v)); }

}  // namespace durm
