#include "durm/durm_head.hpp"

#include <stdexcept>

namespace durm {

Vector pad_label(std::size_t y, const HeadConfig& config) {
  if (y >= config.num_classes) {
    throw std::invalid_argument("pad_label: label names a dummy class");
  }
  Vector out(config.width(), 0.0);
  out[y] = 1.0;
  return out;
}

std::size_t count_dummy_predictions(const std::vector<std::size_t>& predictions,
                                    const HeadConfig& config) {
  std::size_t count = 0;
  for (std::size_t p : predictions) {
    if (p >= config.width()) {
      throw std::invalid_argument("count_dummy_predictions: index out of range");
    }
    if (p >= config.num_classes) ++count;
  }
  return count;
}

GradientFraction gradient_fraction(const Vector& p_dummy) {
  GradientFraction result;
  double total = 0.0;
  for (double p : p_dummy) {
    if (p < 0.0) throw std::invalid_argument("gradient_fraction: negative mass");
    total += p;
  }
  if (total == 0.0) {
    result.fractions.assign(p_dummy.size(), 1.0 / double(p_dummy.size()));
    result.underflow = true;
    return result;
  }
  result.fractions.resize(p_dummy.size());
  for (std::size_t i = 0; i < p_dummy.size(); ++i) {
    result.fractions[i] = p_dummy[i] / total;
  }
  return result;
}

}  // namespace durm
