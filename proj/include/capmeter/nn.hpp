#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "capmeter/linalg.hpp"

namespace capmeter {

/// Two-layer ReLU network f(x) = V [U x]_+ together with the frozen snapshot
/// of its initialization (U0, V0) and the seed that produced it. All the
/// distance-to-initialization measures depend on U0/V0 staying untouched.
struct TwoLayerNet {
  DenseMatrix U;   // h x d
  DenseMatrix V;   // c x h
  DenseMatrix U0;  // frozen copy of U at init
  DenseMatrix V0;  // frozen copy of V at init
  std::uint64_t seed = 0;

  std::size_t input_dim() const { return U.cols(); }
  std::size_t hidden_units() const { return U.rows(); }
  std::size_t num_classes() const { return V.rows(); }

  void validate() const {
    if (V.cols() != U.rows())
      throw std::invalid_argument("TwoLayerNet: V.cols != U.rows");
    if (U0.rows() != U.rows() || U0.cols() != U.cols())
      throw std::invalid_argument("TwoLayerNet: U0 shape mismatch");
    if (V0.rows() != V.rows() || V0.cols() != V.cols())
      throw std::invalid_argument("TwoLayerNet: V0 shape mismatch");
  }
};

struct LabeledDataset {
  DenseMatrix X;           // m x d, samples as rows
  std::vector<int> y;      // length m, each in [0, c)
  int num_classes = 0;
  std::string name;

  std::size_t size() const { return X.rows(); }
  std::size_t dim() const { return X.cols(); }

  void validate() const {
    if (y.size() != X.rows())
      throw std::invalid_argument("LabeledDataset: label count != sample count");
    if (num_classes < 1)
      throw std::invalid_argument("LabeledDataset: num_classes must be >= 1");
    for (int label : y)
      if (label < 0 || label >= num_classes)
        throw std::invalid_argument("LabeledDataset: label out of range");
  }
};

struct MarginParams {
  double gamma = 1.0;
  double delta = 0.01;

  MarginParams() = default;
  MarginParams(double g, double d) : gamma(g), delta(d) {
    if (!(gamma > 0.0)) throw std::invalid_argument("MarginParams: gamma <= 0");
    if (!(delta > 0.0 && delta < 1.0))
      throw std::invalid_argument("MarginParams: delta outside (0,1)");
  }
};

inline Vector forward(const TwoLayerNet& net, const Vector& x) {
  if (x.size() != net.input_dim())
    throw std::invalid_argument("forward: input length != d");
  const std::size_t h = net.hidden_units();
  const std::size_t c = net.num_classes();
  Vector hidden(h);
  for (std::size_t i = 0; i < h; ++i) {
    double z = 0.0;
    const double* u = net.U.row_ptr(i);
    for (std::size_t j = 0; j < x.size(); ++j) z += u[j] * x[j];
    hidden[i] = z > 0.0 ? z : 0.0;
  }
  Vector scores(c, 0.0);
  for (std::size_t k = 0; k < c; ++k) {
    double s = 0.0;
    const double* v = net.V.row_ptr(k);
    for (std::size_t i = 0; i < h; ++i) s += v[i] * hidden[i];
    scores[k] = s;
  }
  return scores;
}

/// Scores for the whole dataset: rows are per-sample class scores.
inline DenseMatrix forward_all(const TwoLayerNet& net,
                               const LabeledDataset& data) {
  if (data.dim() != net.input_dim())
    throw std::invalid_argument("forward_all: dataset dim != net input dim");
  DenseMatrix z = multiply_nt(data.X, net.U);  // m x h
  for (double& v : z.data())
    if (v < 0.0) v = 0.0;
  return multiply_nt(z, net.V);  // m x c
}

/// Margin operator: score of the correct class minus the best other score.
inline double margin_operator(const Vector& scores, int y) {
  if (scores.size() < 2)
    throw std::invalid_argument("margin_operator: needs >= 2 classes");
  if (y < 0 || static_cast<std::size_t>(y) >= scores.size())
    throw std::invalid_argument("margin_operator: label out of range");
  double best_other = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (static_cast<int>(i) != y) best_other = std::max(best_other, scores[i]);
  return scores[static_cast<std::size_t>(y)] - best_other;
}

/// Continuous ramp: 1 below margin 0, 0 above margin gamma, linear between.
inline double ramp_loss(double mu, double gamma) {
  if (!(gamma > 0.0)) throw std::invalid_argument("ramp_loss: gamma <= 0");
  if (mu < 0.0) return 1.0;
  if (mu > gamma) return 0.0;
  return 1.0 - mu / gamma;
}

inline Vector margin_distribution(const TwoLayerNet& net,
                                  const LabeledDataset& data) {
  data.validate();
  const DenseMatrix scores = forward_all(net, data);
  Vector out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int y = data.y[i];
    double best_other = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < scores.cols(); ++k)
      if (static_cast<int>(k) != y)
        best_other = std::max(best_other, scores(i, k));
    out[i] = scores(i, static_cast<std::size_t>(y)) - best_other;
  }
  return out;
}

/// Empirical margin loss L^_gamma. gamma = 0 degenerates to the 0/1 training
/// error, with a margin of exactly 0 (a tie) counted as an error.
inline double empirical_margin_loss(const TwoLayerNet& net,
                                    const LabeledDataset& data, double gamma) {
  if (gamma < 0.0)
    throw std::invalid_argument("empirical_margin_loss: gamma < 0");
  const Vector margins = margin_distribution(net, data);
  double acc = 0.0;
  if (gamma == 0.0) {
    for (double mu : margins) acc += (mu <= 0.0) ? 1.0 : 0.0;
  } else {
    for (double mu : margins) acc += ramp_loss(mu, gamma);
  }
  return acc / static_cast<double>(margins.size());
}

/// -log softmax(scores)[y], stabilized by max subtraction.
inline double cross_entropy(const Vector& scores, int y) {
  if (y < 0 || static_cast<std::size_t>(y) >= scores.size())
    throw std::invalid_argument("cross_entropy: label out of range");
  const double top = *std::max_element(scores.begin(), scores.end());
  double sum = 0.0;
  for (double s : scores) sum += std::exp(s - top);
  return std::log(sum) - (scores[static_cast<std::size_t>(y)] - top);
}

}  // namespace capmeter
