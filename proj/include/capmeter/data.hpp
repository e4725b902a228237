#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "capmeter/nn.hpp"
#include "capmeter/rng.hpp"

namespace capmeter {

enum class Normalize { unit_range, none };

struct DatasetSpec {
  std::optional<std::size_t> limit;
  Normalize normalize = Normalize::none;
  double random_label_fraction = 0.0;
  std::uint64_t label_seed = 0;

  void validate() const {
    if (limit && *limit == 0)
      throw std::invalid_argument("DatasetSpec: limit must be >= 1");
    if (random_label_fraction < 0.0 || random_label_fraction > 1.0)
      throw std::invalid_argument("DatasetSpec: fraction outside [0,1]");
  }
};

/// Resamples the labels of a seeded-chosen floor(fraction*m) subset uniformly
/// from [0, c); a resampled label may coincide with the original.
inline LabeledDataset randomize_labels(LabeledDataset data, double fraction,
                                       std::uint64_t seed) {
  if (fraction < 0.0 || fraction > 1.0)
    throw std::invalid_argument("randomize_labels: fraction outside [0,1]");
  const std::size_t m = data.size();
  const auto count = static_cast<std::size_t>(fraction * static_cast<double>(m));
  if (count == 0) return data;
  std::vector<std::size_t> idx(m);
  for (std::size_t i = 0; i < m; ++i) idx[i] = i;
  rng::Engine eng(rng::derive_seed(seed, rng::Stream::labels));
  eng.shuffle(idx);
  for (std::size_t i = 0; i < count; ++i)
    data.y[idx[i]] =
        static_cast<int>(eng.below(static_cast<std::uint64_t>(data.num_classes)));
  return data;
}

namespace detail {

inline std::uint32_t read_u32_be(std::istream& is, const std::string& path) {
  unsigned char buf[4];
  is.read(reinterpret_cast<char*>(buf), 4);
  if (!is) throw std::runtime_error("idx: truncated header in " + path);
  return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
         (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

inline LabeledDataset finalize(LabeledDataset data, const DatasetSpec& spec) {
  if (spec.random_label_fraction > 0.0)
    data = randomize_labels(std::move(data), spec.random_label_fraction,
                            spec.label_seed);
  data.validate();
  return data;
}

}  // namespace detail

/// Loads an IDX image/label pair (the MNIST container format). Pixels are
/// flattened row-major; unit_range divides by 255; `limit` keeps the first
/// samples. Labels are validated against the 10-class digit convention.
inline LabeledDataset load_idx(const std::string& images_path,
                               const std::string& labels_path,
                               const DatasetSpec& spec = {}) {
  spec.validate();
  constexpr int kClasses = 10;

  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw std::runtime_error("idx: cannot open " + images_path);
  if (detail::read_u32_be(img, images_path) != 0x00000803u)
    throw std::runtime_error("idx: bad image magic in " + images_path);
  const std::uint32_t n_images = detail::read_u32_be(img, images_path);
  const std::uint32_t rows = detail::read_u32_be(img, images_path);
  const std::uint32_t cols = detail::read_u32_be(img, images_path);

  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw std::runtime_error("idx: cannot open " + labels_path);
  if (detail::read_u32_be(lab, labels_path) != 0x00000801u)
    throw std::runtime_error("idx: bad label magic in " + labels_path);
  const std::uint32_t n_labels = detail::read_u32_be(lab, labels_path);

  if (n_images != n_labels)
    throw std::runtime_error("idx: image/label count mismatch");
  if (n_images == 0 || rows == 0 || cols == 0)
    throw std::runtime_error("idx: empty dataset");

  std::size_t m = n_images;
  if (spec.limit) m = std::min<std::size_t>(m, *spec.limit);
  const std::size_t d = std::size_t{rows} * cols;

  Vector pixels(m * d);
  std::vector<unsigned char> row(d);
  for (std::size_t i = 0; i < m; ++i) {
    img.read(reinterpret_cast<char*>(row.data()),
             static_cast<std::streamsize>(d));
    if (!img) throw std::runtime_error("idx: truncated image data");
    const double scale = spec.normalize == Normalize::unit_range ? 255.0 : 1.0;
    for (std::size_t j = 0; j < d; ++j)
      pixels[i * d + j] = static_cast<double>(row[j]) / scale;
  }

  std::vector<int> labels(m);
  for (std::size_t i = 0; i < m; ++i) {
    char b;
    lab.read(&b, 1);
    if (!lab) throw std::runtime_error("idx: truncated label data");
    const int label = static_cast<unsigned char>(b);
    if (label >= kClasses)
      throw std::runtime_error("idx: label out of range (>= 10)");
    labels[i] = label;
  }

  LabeledDataset data;
  data.X = DenseMatrix(m, d, std::move(pixels));
  data.y = std::move(labels);
  data.num_classes = kClasses;
  data.name = images_path;
  return detail::finalize(std::move(data), spec);
}

/// CSV rows of d floats followed by an integer label. A header row is
/// detected by a non-numeric first field and skipped.
inline LabeledDataset load_csv(const std::string& path,
                               const DatasetSpec& spec = {}) {
  spec.validate();
  std::ifstream is(path);
  if (!is) throw std::runtime_error("csv: cannot open " + path);

  auto parse_field = [](const std::string& field, double& out) {
    std::size_t used = 0;
    try {
      out = std::stod(field, &used);
    } catch (const std::exception&) {
      return false;
    }
    while (used < field.size() && std::isspace(static_cast<unsigned char>(field[used])))
      ++used;
    return used == field.size();
  };

  std::vector<Vector> rows;
  std::vector<int> labels;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  int max_label = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    Vector values;
    bool numeric = true;
    while (std::getline(ss, field, ',')) {
      double v;
      if (!parse_field(field, v)) {
        numeric = false;
        break;
      }
      values.push_back(v);
    }
    if (!numeric) {
      if (rows.empty() && labels.empty() && line_no == 1) continue;  // header
      throw std::runtime_error("csv: non-numeric field at line " +
                               std::to_string(line_no));
    }
    if (values.size() < 2)
      throw std::runtime_error("csv: too few fields at line " +
                               std::to_string(line_no));
    if (width == 0) width = values.size();
    if (values.size() != width)
      throw std::runtime_error("csv: ragged row at line " +
                               std::to_string(line_no));
    const double raw_label = values.back();
    values.pop_back();
    const int label = static_cast<int>(raw_label);
    if (static_cast<double>(label) != raw_label || label < 0)
      throw std::runtime_error("csv: label is not a nonnegative integer at line " +
                               std::to_string(line_no));
    max_label = std::max(max_label, label);
    rows.push_back(std::move(values));
    labels.push_back(label);
    if (spec.limit && rows.size() == *spec.limit) break;
  }
  if (rows.empty()) throw std::runtime_error("csv: empty file " + path);

  LabeledDataset data;
  data.X = DenseMatrix::from_rows(rows);
  data.y = std::move(labels);
  data.num_classes = max_label + 1;
  data.name = path;
  if (spec.normalize == Normalize::unit_range) {
    double lo = data.X.data()[0], hi = data.X.data()[0];
    for (double v : data.X.data()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const double span = hi > lo ? hi - lo : 1.0;
    for (double& v : data.X.data()) v = (v - lo) / span;
  }
  return detail::finalize(std::move(data), spec);
}

/// Balanced Gaussian blobs: c class means drawn on a sphere of radius
/// `separation`, samples = mean + standard normal noise. Class 0 absorbs the
/// remainder when c does not divide m.
inline LabeledDataset synthetic_gaussian(std::size_t d, std::size_t m,
                                         int num_classes, std::uint64_t seed,
                                         double separation) {
  if (num_classes < 2)
    throw std::invalid_argument("synthetic_gaussian: need >= 2 classes");
  if (separation < 0.0)
    throw std::invalid_argument("synthetic_gaussian: separation < 0");
  if (m < static_cast<std::size_t>(num_classes))
    throw std::invalid_argument("synthetic_gaussian: m < num_classes");

  rng::Engine mean_eng(rng::derive_seed(seed, rng::Stream::class_means));
  std::vector<Vector> means(static_cast<std::size_t>(num_classes));
  for (auto& mu : means) {
    mu.resize(d);
    for (double& v : mu) v = mean_eng.gaussian();
    const double norm = norm2(mu);
    const double scale = norm > 0.0 ? separation / norm : 0.0;
    for (double& v : mu) v *= scale;
  }

  const std::size_t base = m / static_cast<std::size_t>(num_classes);
  rng::Engine noise_eng(rng::derive_seed(seed, rng::Stream::noise));
  Vector xs(m * d);
  std::vector<int> labels(m);
  std::size_t row = 0;
  for (int k = 0; k < num_classes; ++k) {
    std::size_t count = base;
    if (k == 0) count += m - base * static_cast<std::size_t>(num_classes);
    for (std::size_t i = 0; i < count; ++i, ++row) {
      labels[row] = k;
      for (std::size_t j = 0; j < d; ++j)
        xs[row * d + j] = means[static_cast<std::size_t>(k)][j] +
                          noise_eng.gaussian();
    }
  }

  LabeledDataset data;
  data.X = DenseMatrix(m, d, std::move(xs));
  data.y = std::move(labels);
  data.num_classes = num_classes;
  data.name = "synthetic_gaussian";
  data.validate();
  return data;
}

}  // namespace capmeter
