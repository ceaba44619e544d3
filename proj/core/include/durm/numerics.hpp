#pragma once

#include <cstddef>
#include <vector>

namespace durm {

using Vector = std::vector<double>;

// Dense row-major matrix. Kept deliberately small: the lab works with
// networks of a few thousand parameters, so a flat vector plus an index
// helper is all we need.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Vector data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

// Probabilities are floored at this value inside cross_entropy so that a
// confidently wrong prediction yields a large but finite loss.
inline constexpr double kProbFloor = 1e-12;

// Numerically stable softmax: subtracts the max logit before exponentiating.
// Throws std::invalid_argument on empty or non-finite input.
Vector softmax(const Vector& logits);

// Cross entropy against a (possibly soft) target distribution:
//   -sum_i y_i * log(max(p_i, kProbFloor)).
// With a one-hot target this is the usual negative log likelihood.
double cross_entropy(const Vector& probs, const Vector& target);

// Gradient of cross entropy with respect to the logits: p - y.
Vector grad_logits(const Vector& probs, const Vector& target);

// Returns W x + b with W of shape (out, in).
Vector affine(const Matrix& W, const Vector& x, const Vector& b);

double dot(const Vector& a, const Vector& b);
double norm(const Vector& v);

}  // namespace durm
