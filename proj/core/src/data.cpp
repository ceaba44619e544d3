#include "durm/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "durm/digest.hpp"

namespace durm {

Vector Dataset::row(std::size_t i) const {
  Vector out(features.cols);
  for (std::size_t c = 0; c < features.cols; ++c) out[c] = features(i, c);
  return out;
}

std::vector<std::size_t> class_histogram(const Dataset& data) {
  std::vector<std::size_t> hist(data.num_classes, 0);
  for (std::size_t y : data.labels) ++hist[y];
  return hist;
}

namespace {

Dataset take_rows(const Dataset& data, const std::vector<std::size_t>& rows,
                  const std::string& provenance) {
  Dataset out;
  out.features = Matrix(rows.size(), data.dim());
  out.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < data.dim(); ++c) {
      out.features(i, c) = data.features(rows[i], c);
    }
    out.labels.push_back(data.labels[rows[i]]);
  }
  out.num_classes = data.num_classes;
  out.provenance = provenance;
  return out;
}

}  // namespace

Dataset gen_blobs(std::uint64_t seed, std::size_t num_classes,
                  std::size_t per_class, std::size_t dim, double separation,
                  double spread) {
  if (num_classes == 0 || per_class == 0 || dim == 0) {
    throw std::invalid_argument("gen_blobs: counts must be positive");
  }
  if (spread <= 0.0) throw std::invalid_argument("gen_blobs: spread must be > 0");
  if (num_classes > 2 * dim) {
    throw std::invalid_argument(
        "gen_blobs: need dim >= num_classes/2 to place distinct centers");
  }

  Dataset data;
  const std::size_t n = num_classes * per_class;
  data.features = Matrix(n, dim);
  data.labels.reserve(n);
  data.num_classes = num_classes;

  std::mt19937_64 gen(seed);
  std::normal_distribution<double> noise(0.0, spread);
  std::size_t row = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    // Center on the +axis for the first dim classes, the -axis afterwards.
    const std::size_t axis = c % dim;
    const double center = c < dim ? separation : -separation;
    for (std::size_t s = 0; s < per_class; ++s, ++row) {
      for (std::size_t d = 0; d < dim; ++d) {
        data.features(row, d) = (d == axis ? center : 0.0) + noise(gen);
      }
      data.labels.push_back(c);
    }
  }

  std::ostringstream prov;
  prov << "blobs(seed=" << seed << ", classes=" << num_classes
       << ", per_class=" << per_class << ", dim=" << dim
       << ", separation=" << separation << ", spread=" << spread << ")";
  data.provenance = prov.str();
  return data;
}

Dataset load_csv(const std::string& path, const std::string& label_column) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv: cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string content = buffer.str();
  if (content.empty()) throw std::runtime_error("load_csv: empty file " + path);

  auto split_line = [](const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    return cells;
  };

  std::istringstream lines(content);
  std::string line;
  if (!std::getline(lines, line)) {
    throw std::runtime_error("load_csv: missing header in " + path);
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split_line(line);
  std::size_t label_idx = header.size();
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == label_column) label_idx = i;
  }
  if (label_idx == header.size()) {
    throw std::runtime_error("load_csv: no column named '" + label_column +
                             "' in " + path);
  }

  std::vector<Vector> rows;
  std::vector<std::string> raw_labels;
  std::size_t data_row = 0;
  while (std::getline(lines, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++data_row;
    const std::vector<std::string> cells = split_line(line);
    if (cells.size() != header.size()) {
      throw std::runtime_error("load_csv: row " + std::to_string(data_row) +
                               " has " + std::to_string(cells.size()) +
                               " cells, expected " +
                               std::to_string(header.size()));
    }
    Vector feat;
    feat.reserve(header.size() - 1);
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i == label_idx) {
        raw_labels.push_back(cells[i]);
        continue;
      }
      std::size_t consumed = 0;
      double value = 0.0;
      try {
        value = std::stod(cells[i], &consumed);
      } catch (const std::exception&) {
        consumed = 0;
      }
      if (consumed != cells[i].size() || cells[i].empty() ||
          !std::isfinite(value)) {
        throw std::runtime_error("load_csv: non-numeric feature at row " +
                                 std::to_string(data_row) + ", column '" +
                                 header[i] + "'");
      }
      feat.push_back(value);
    }
    rows.push_back(std::move(feat));
  }
  if (rows.empty()) throw std::runtime_error("load_csv: no data rows in " + path);

  // Integer labels are taken at face value; anything else is enumerated by
  // first appearance.
  bool all_int = true;
  std::vector<long> int_labels;
  for (const std::string& s : raw_labels) {
    std::size_t consumed = 0;
    long v = 0;
    try {
      v = std::stol(s, &consumed);
    } catch (const std::exception&) {
      consumed = 0;
    }
    if (consumed != s.size() || s.empty() || v < 0) {
      all_int = false;
      break;
    }
    int_labels.push_back(v);
  }

  Dataset data;
  data.features = Matrix(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      data.features(r, c) = rows[r][c];
    }
  }
  if (all_int) {
    long max_label = 0;
    for (long v : int_labels) max_label = std::max(max_label, v);
    data.num_classes = static_cast<std::size_t>(max_label) + 1;
    for (long v : int_labels) data.labels.push_back(static_cast<std::size_t>(v));
  } else {
    std::vector<std::string> seen;
    for (const std::string& s : raw_labels) {
      auto it = std::find(seen.begin(), seen.end(), s);
      if (it == seen.end()) {
        seen.push_back(s);
        it = std::prev(seen.end());
      }
      data.labels.push_back(static_cast<std::size_t>(it - seen.begin()));
    }
    data.num_classes = seen.size();
  }
  data.provenance = "csv:" + path + " sha256:" + sha256_hex(content);
  return data;
}

Split train_test_split(const Dataset& data, double test_fraction,
                       std::uint64_t seed, bool stratified) {
  if (test_fraction <= 0.0 || test_fraction >= 1.0) {
    throw std::invalid_argument("train_test_split: fraction must be in (0,1)");
  }
  std::mt19937_64 gen(seed);
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;

  if (stratified) {
    std::vector<std::vector<std::size_t>> by_class(data.num_classes);
    for (std::size_t i = 0; i < data.size(); ++i) {
      by_class[data.labels[i]].push_back(i);
    }
    for (std::size_t c = 0; c < by_class.size(); ++c) {
      auto& idx = by_class[c];
      if (idx.size() < 2) {
        throw std::invalid_argument(
            "train_test_split: class " + std::to_string(c) +
            " has fewer than 2 samples; cannot stratify");
      }
      std::shuffle(idx.begin(), idx.end(), gen);
      std::size_t n_test = static_cast<std::size_t>(
          std::lround(double(idx.size()) * test_fraction));
      n_test = std::clamp<std::size_t>(n_test, 1, idx.size() - 1);
      test_rows.insert(test_rows.end(), idx.begin(), idx.begin() + n_test);
      train_rows.insert(train_rows.end(), idx.begin() + n_test, idx.end());
    }
  } else {
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), gen);
    std::size_t n_test =
        static_cast<std::size_t>(std::lround(double(idx.size()) * test_fraction));
    n_test = std::clamp<std::size_t>(n_test, 1, idx.size() - 1);
    test_rows.assign(idx.begin(), idx.begin() + n_test);
    train_rows.assign(idx.begin() + n_test, idx.end());
  }

  std::ostringstream tag;
  tag << " | split(test_fraction=" << test_fraction << ", seed=" << seed
      << ", stratified=" << (stratified ? "true" : "false");
  Split split;
  split.train = take_rows(data, train_rows,
                          data.provenance + tag.str() + ", part=train)");
  split.test =
      take_rows(data, test_rows, data.provenance + tag.str() + ", part=test)");
  return split;
}

Dataset make_longtail(const Dataset& data, double imbalance_ratio,
                      std::uint64_t seed) {
  if (imbalance_ratio < 1.0) {
    throw std::invalid_argument("make_longtail: ratio must be >= 1");
  }
  std::vector<std::vector<std::size_t>> by_class(data.num_classes);
  for (std::size_t i = 0; i < data.size(); ++i) {
    by_class[data.labels[i]].push_back(i);
  }

  std::mt19937_64 gen(seed);
  std::vector<std::size_t> keep_rows;
  std::ostringstream tag;
  tag << " | longtail(ratio=" << imbalance_ratio << ", seed=" << seed << ")";

  if (imbalance_ratio == 1.0 || data.num_classes < 2) {
    // Degenerate profile: every class keeps everything.
    for (auto& idx : by_class) {
      keep_rows.insert(keep_rows.end(), idx.begin(), idx.end());
    }
    return take_rows(data, keep_rows, data.provenance + tag.str());
  }

  const double n_head = double(by_class[0].size());
  for (std::size_t c = 0; c < data.num_classes; ++c) {
    const double exponent = -double(c) / double(data.num_classes - 1);
    const auto quota = static_cast<std::size_t>(
        std::lround(n_head * std::pow(imbalance_ratio, exponent)));
    auto& idx = by_class[c];
    if (quota > idx.size()) {
      throw std::invalid_argument("make_longtail: class " + std::to_string(c) +
                                  " has " + std::to_string(idx.size()) +
                                  " samples, needs " + std::to_string(quota));
    }
    std::shuffle(idx.begin(), idx.end(), gen);
    keep_rows.insert(keep_rows.end(), idx.begin(), idx.begin() + quota);
  }
  return take_rows(data, keep_rows, data.provenance + tag.str());
}

}  // namespace durm
