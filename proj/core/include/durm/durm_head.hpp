#pragma once

#include <cstddef>
#include <vector>

#include "durm/numerics.hpp"

namespace durm {

// The enlarged output head: C real classes plus C_d dummy classes. With
// num_dummy == 0 everything degenerates to plain ERM.
struct HeadConfig {
  std::size_t num_classes = 2;
  std::size_t num_dummy = 0;

  std::size_t width() const { return num_classes + num_dummy; }
};

// One-hot vector of length C + C_d; the dummy entries stay zero because the
// ground truth never names a dummy class.
Vector pad_label(std::size_t y, const HeadConfig& config);

// Number of predictions that landed on a dummy index (>= C).
std::size_t count_dummy_predictions(const std::vector<std::size_t>& predictions,
                                    const HeadConfig& config);

struct GradientFraction {
  Vector fractions;
  // Set when the input mass was all zero (underflow); the fractions are then
  // the uniform vector rather than an undefined ratio.
  bool underflow = false;
};

// Normalizes the dummy-class probability masses to fractions summing to 1.
GradientFraction gradient_fraction(const Vector& p_dummy);

}  // namespace durm
