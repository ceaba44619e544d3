#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "durm/numerics.hpp"

namespace durm {

struct Dataset {
  Matrix features;                  // N x D
  std::vector<std::size_t> labels;  // N entries in [0, num_classes)
  std::size_t num_classes = 0;
  // Human-readable source descriptor: generator parameters or
  // "csv:<path> sha256:<digest>".
  std::string provenance;

  std::size_t size() const { return features.rows; }
  std::size_t dim() const { return features.cols; }
  Vector row(std::size_t i) const;
};

// Gaussian blobs with centers at +/- separation along coordinate axes:
// class c sits at +separation * e_c for c < dim and at -separation * e_{c-dim}
// beyond that, so up to 2*dim classes fit in dim dimensions.
Dataset gen_blobs(std::uint64_t seed, std::size_t num_classes,
                  std::size_t per_class, std::size_t dim, double separation,
                  double spread);

// Comma-separated file with a header row. Feature columns must be numeric;
// the label column may hold integers or strings (mapped to indices by first
// appearance). Provenance records the file's content digest.
Dataset load_csv(const std::string& path, const std::string& label_column);

struct Split {
  Dataset train;
  Dataset test;
};

Split train_test_split(const Dataset& data, double test_fraction,
                       std::uint64_t seed, bool stratified);

// Subsamples to an exponential class profile: class c keeps
// round(n_head * ratio^(-c / (C-1))) samples, class 0 being the head.
Dataset make_longtail(const Dataset& data, double imbalance_ratio,
                      std::uint64_t seed);

std::vector<std::size_t> class_histogram(const Dataset& data);

}  // namespace durm
