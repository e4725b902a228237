#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "capmeter/linalg.hpp"
#include "capmeter/measures.hpp"
#include "capmeter/nn.hpp"

namespace capmeter {

struct Thm1Bounds {
  double first = 0.0;   // unit-wise sum form
  double second = 0.0;  // Cauchy-Schwarz relaxation of the first form
};

/// Rademacher bound for the margin-loss composition, both displayed forms:
///   first  = (2 sqrt(2c)+2)/(gamma m) * sum_j alpha_j (beta_j ||X||_F + ||u_j^0 X||_2)
///   second = (2 sqrt(2c)+2)/(gamma sqrt(m)) * ||alpha||_2
///            (||beta||_2 sqrt(mean ||x_i||^2) + sqrt(mean ||U0 x_i||^2))
/// with X holding the samples as columns (d x m).
inline Thm1Bounds thm1_bounds(const MeasurePanel& panel, const TwoLayerNet& net,
                              const LabeledDataset& data, double gamma) {
  if (!(gamma > 0.0)) throw std::invalid_argument("thm1_bounds: gamma <= 0");
  net.validate();
  const auto m = static_cast<double>(data.size());
  const auto c = static_cast<double>(net.num_classes());
  const double coeff = 2.0 * std::sqrt(2.0 * c) + 2.0;
  const double fro_x = frobenius_norm(data.X);

  const DenseMatrix u0x = multiply_nt(net.U0, data.X);  // h x m
  double sum = 0.0;
  for (std::size_t j = 0; j < net.hidden_units(); ++j) {
    double row_sq = 0.0;
    const double* row = u0x.row_ptr(j);
    for (std::size_t i = 0; i < data.size(); ++i) row_sq += row[i] * row[i];
    sum += panel.alpha[j] * (panel.beta[j] * fro_x + std::sqrt(row_sq));
  }

  Thm1Bounds out;
  out.first = coeff / (gamma * m) * sum;
  const double mean_x_sq = fro_x * fro_x / m;
  const double mean_u0x_sq =
      frobenius_norm(u0x) * frobenius_norm(u0x) / m;
  out.second = coeff / (gamma * std::sqrt(m)) * norm2(panel.alpha) *
               (norm2(panel.beta) * std::sqrt(mean_x_sq) +
                std::sqrt(mean_u0x_sq));
  return out;
}

namespace detail {

inline double log_term_or_throw(double gamma, double m, double delta,
                                double lead, const char* who) {
  // The log may legitimately be negative (gamma sqrt(m)/delta <= 1); only a
  // negative radicand is an error, exactly as the formula prints.
  const double radicand = lead + std::log(gamma * std::sqrt(m) / delta);
  if (radicand < 0.0)
    throw std::domain_error(std::string(who) +
                            ": negative radicand in the sqrt term");
  return 3.0 * std::sqrt(radicand / m);
}

}  // namespace detail

/// Frobenius-norm generalization bound with exact constants:
///   L^_gamma + 3 sqrt(2) (sqrt(2c)+1) (||V||_F + 1)
///              (||U-U0||_F ||X||_F + ||U0 X||_F + 1) / (gamma sqrt(m))
///            + 3 sqrt((5h + ln(gamma sqrt(m)/delta)) / m)
inline double thm2_bound(const TwoLayerNet& net, const LabeledDataset& data,
                         double gamma, double delta) {
  if (net.hidden_units() < 2)
    throw std::invalid_argument("thm2_bound: requires h >= 2");
  (void)MarginParams(gamma, delta);  // validates gamma, delta
  const auto m = static_cast<double>(data.size());
  const auto c = static_cast<double>(net.num_classes());
  const auto h = static_cast<double>(net.hidden_units());

  const double empirical = empirical_margin_loss(net, data, gamma);
  const double fro_x = frobenius_norm(data.X);
  const double fro_du = frobenius_norm(subtract(net.U, net.U0));
  const double fro_u0x = frobenius_norm(multiply_nt(data.X, net.U0));
  const double mid = 3.0 * std::sqrt(2.0) * (std::sqrt(2.0 * c) + 1.0) *
                     (frobenius_norm(net.V) + 1.0) *
                     (fro_du * fro_x + fro_u0x + 1.0) /
                     (gamma * std::sqrt(m));
  return empirical + mid +
         detail::log_term_or_throw(gamma, m, delta, 5.0 * h, "thm2_bound");
}

/// l_p group-norm generalization bound with exact constants (p >= 2):
///   L^_gamma + 4 e^2 (sqrt(2c)+1) (h^{1/2-1/p} ||V^T||_{p,2} + 1)
///              (h^{1/2-1/p} ||U-U0||_{p,2} ||X||_F + ||U0 X||_F + 1)
///              / (gamma sqrt(m))
///            + 3 sqrt((ceil(e^{1-p} h - 1) ln(e h) + ln(gamma sqrt(m)/delta)) / m)
/// Group norms run along the hidden-unit axis (columns of V, rows of U-U0).
inline double thm4_bound(const TwoLayerNet& net, const LabeledDataset& data,
                         double gamma, double delta, double p) {
  if (!(p >= 2.0)) throw std::invalid_argument("thm4_bound: p must be >= 2");
  if (net.hidden_units() < 2)
    throw std::invalid_argument("thm4_bound: requires h >= 2");
  (void)MarginParams(gamma, delta);  // validates gamma, delta
  const auto m = static_cast<double>(data.size());
  const auto c = static_cast<double>(net.num_classes());
  const auto h = static_cast<double>(net.hidden_units());

  const double empirical = empirical_margin_loss(net, data, gamma);
  const double fro_x = frobenius_norm(data.X);
  const double fro_u0x = frobenius_norm(multiply_nt(data.X, net.U0));
  const double h_pow = std::pow(h, 0.5 - 1.0 / p);
  const double v_p2 = group_norm(net.V, Axis::cols, p, 2);
  const double du_p2 = group_norm(subtract(net.U, net.U0), Axis::rows, p, 2);
  const double e2 = std::exp(2.0);
  const double mid = 4.0 * e2 * (std::sqrt(2.0 * c) + 1.0) *
                     (h_pow * v_p2 + 1.0) *
                     (h_pow * du_p2 * fro_x + fro_u0x + 1.0) /
                     (gamma * std::sqrt(m));
  const double ceil_term = std::ceil(std::exp(1.0 - p) * h - 1.0);
  const double lead = ceil_term * std::log(std::exp(1.0) * h);
  return empirical + mid +
         detail::log_term_or_throw(gamma, m, delta, lead, "thm4_bound");
}

/// The p = ln h corollary evaluates the l_p bound at p = max(2, ln h).
inline double thm4_corollary_p(std::size_t h) {
  return std::max(2.0, std::log(static_cast<double>(h)));
}

struct Table1Result {
  std::map<int, double> rows;
  bool spectral_converged = true;
};

/// The six comparator capacity measures, evaluated with displayed constant 1
/// plus the class-count scalings c (row 2) and sqrt(c) (row 3). Reference
/// matrices are the initialization; group norms run along the hidden-unit
/// axis; the inf,1 norm is the max row l1 norm.
inline Table1Result table1_measures(const TwoLayerNet& net, double tol = 1e-9,
                                    std::size_t max_iter = 10000) {
  net.validate();
  const auto d = static_cast<double>(net.input_dim());
  const auto h = static_cast<double>(net.hidden_units());
  const auto c = static_cast<double>(net.num_classes());
  const double inf = std::numeric_limits<double>::infinity();

  const DenseMatrix du = subtract(net.U, net.U0);
  const DenseMatrix dv = subtract(net.V, net.V0);
  const auto spec_u = spectral_norm(net.U, tol, max_iter);
  const auto spec_u0 = spectral_norm(net.U0, tol, max_iter);
  const auto spec_v = spectral_norm(net.V, tol, max_iter);

  Table1Result out;
  out.spectral_converged =
      spec_u.converged && spec_u0.converged && spec_v.converged;
  out.rows[1] = d * h;
  out.rows[2] = c * group_norm(net.U, Axis::rows, inf, 1) *
                group_norm(net.V, Axis::rows, inf, 1);
  out.rows[3] = std::sqrt(c) * frobenius_norm(net.U) * frobenius_norm(net.V);
  out.rows[4] = spec_u.value * group_norm(dv, Axis::cols, 1.0, 2) +
                group_norm(du, Axis::rows, 1.0, 2) * spec_v.value;
  out.rows[5] = spec_u.value * frobenius_norm(dv) +
                std::sqrt(h) * frobenius_norm(du) * spec_v.value;
  out.rows[6] = spec_u0.value * frobenius_norm(net.V) +
                frobenius_norm(du) * frobenius_norm(net.V) + std::sqrt(h);
  return out;
}

// ---------------------------------------------------------------------------
// l_p ball covering by entrywise-dominance boxes.

struct CoverSpec {
  std::size_t dim = 1;         // D
  double p = 2.0;              // p >= 2
  double eps = 1.0;            // epsilon > 0
  double beta_radius = 1.0;    // ball radius > 0

  void validate() const {
    if (dim < 1) throw std::invalid_argument("CoverSpec: dim must be >= 1");
    if (!(p >= 2.0)) throw std::invalid_argument("CoverSpec: p must be >= 2");
    if (!(eps > 0.0)) throw std::invalid_argument("CoverSpec: eps must be > 0");
    if (!(beta_radius > 0.0))
      throw std::invalid_argument("CoverSpec: beta_radius must be > 0");
  }
};

inline std::size_t cover_grid_levels(const CoverSpec& spec) {
  spec.validate();
  const double denom = std::pow(1.0 + spec.eps, spec.p) - 1.0;
  const double x = static_cast<double>(spec.dim) / denom;
  // Snap to the lattice when eps was specified to boundary precision
  // (e.g. 0.41421356 for sqrt(2)-1), so K = ceil(x) does not jump by one.
  const double snapped = std::round(x);
  if (snapped >= 1.0 && std::abs(x - snapped) <= 1e-6 * std::max(1.0, x))
    return static_cast<std::size_t>(snapped);
  return static_cast<std::size_t>(std::ceil(x));
}

/// ln N with N = binom(K+D-1, D-1) and K = ceil(D / ((1+eps)^p - 1)),
/// computed in log space via log-gamma.
inline double cover_count_log(const CoverSpec& spec) {
  const auto k = static_cast<double>(cover_grid_levels(spec));
  const auto d = static_cast<double>(spec.dim);
  return std::lgamma(k + d) - std::lgamma(k + 1.0) - std::lgamma(d);
}

/// Enumerates the dominance cover of the l_p ball: boxes with per-coordinate
/// bounds alpha_i = beta (j_i / K)^{1/p}, j_i in {1..K}. Only boxes that are
/// maximal under the budget sum(j_i) <= K + D are emitted; dominated boxes
/// cover nothing new, and dropping them keeps the count within N.
inline std::vector<Vector> cover_construct(const CoverSpec& spec) {
  spec.validate();
  if (spec.dim > 12)
    throw std::invalid_argument("cover_construct: D > 12 is intractable");
  const std::size_t k = cover_grid_levels(spec);
  const std::size_t dim = spec.dim;
  const std::size_t budget = k + dim;

  auto box_of = [&](const std::vector<std::size_t>& levels) {
    Vector alpha(dim);
    for (std::size_t i = 0; i < dim; ++i)
      alpha[i] = spec.beta_radius *
                 std::pow(static_cast<double>(levels[i]) /
                              static_cast<double>(k),
                          1.0 / spec.p);
    return alpha;
  };

  std::vector<Vector> boxes;
  if (dim * k <= budget) {
    // The all-K box is feasible and dominates every other feasible box.
    boxes.push_back(box_of(std::vector<std::size_t>(dim, k)));
    return boxes;
  }

  // Maximal feasible boxes are exactly those with sum(j_i) == K + D.
  std::vector<std::size_t> levels(dim, 1);
  const auto enumerate = [&](auto&& self, std::size_t pos,
                             std::size_t remaining) -> void {
    if (pos + 1 == dim) {
      if (remaining >= 1 && remaining <= k) {
        levels[pos] = remaining;
        boxes.push_back(box_of(levels));
      }
      return;
    }
    const std::size_t tail = dim - pos - 1;  // coords after this one, each >= 1
    for (std::size_t j = 1; j <= k && j + tail <= remaining; ++j) {
      levels[pos] = j;
      self(self, pos + 1, remaining - j);
    }
  };
  enumerate(enumerate, 0, budget);
  return boxes;
}

// ---------------------------------------------------------------------------

struct BoundPanel {
  Thm1Bounds thm1;
  double thm2 = 0.0;
  std::map<double, double> thm4;  // p -> bound
  Table1Result table1;
  double capacity_numerator = 0.0;
  double gamma = 0.0, delta = 0.0;
  std::size_t m = 0, c = 0, h = 0, d = 0;
  double x_fro = 0.0, u0x_fro = 0.0;
  double empirical_margin = 0.0;
};

inline BoundPanel bound_panel(const TwoLayerNet& net, const LabeledDataset& data,
                              const MeasurePanel& panel, double gamma,
                              double delta, const std::vector<double>& ps) {
  BoundPanel out;
  out.gamma = gamma;
  out.delta = delta;
  out.m = data.size();
  out.c = net.num_classes();
  out.h = net.hidden_units();
  out.d = net.input_dim();
  out.x_fro = frobenius_norm(data.X);
  out.u0x_fro = frobenius_norm(multiply_nt(data.X, net.U0));
  out.empirical_margin = empirical_margin_loss(net, data, gamma);
  out.thm1 = thm1_bounds(panel, net, data, gamma);
  out.thm2 = thm2_bound(net, data, gamma, delta);
  for (double p : ps) out.thm4[p] = thm4_bound(net, data, gamma, delta, p);
  out.table1 = table1_measures(net);
  out.capacity_numerator = capacity_numerator(net, data);
  return out;
}

inline nlohmann::ordered_json bound_panel_to_json(const BoundPanel& b) {
  nlohmann::ordered_json j;
  j["gamma"] = b.gamma;
  j["delta"] = b.delta;
  j["m"] = b.m;
  j["c"] = b.c;
  j["h"] = b.h;
  j["d"] = b.d;
  j["x_fro"] = b.x_fro;
  j["u0x_fro"] = b.u0x_fro;
  j["empirical_margin_loss"] = b.empirical_margin;
  j["thm1_first_form"] = b.thm1.first;
  j["thm1_second_form"] = b.thm1.second;
  j["thm2_bound"] = b.thm2;
  nlohmann::ordered_json thm4 = nlohmann::ordered_json::object();
  for (const auto& [p, value] : b.thm4) {
    char key[32];
    std::snprintf(key, sizeof(key), "%g", p);
    thm4[key] = value;
  }
  j["thm4_bound"] = std::move(thm4);
  nlohmann::ordered_json table = nlohmann::ordered_json::object();
  for (const auto& [row, value] : b.table1.rows)
    table[std::to_string(row)] = value;
  j["table1"] = std::move(table);
  j["table1_spectral_converged"] = b.table1.spectral_converged;
  j["capacity_numerator"] = b.capacity_numerator;
  j["conventions"] = {
      {"group_norm_axis", "hidden units (rows of U/dU, columns of V/dV)"},
      {"inf_1_norm", "max over rows of row l1 norms"},
      {"design_matrix", "samples as columns for ||U0 X||"},
      {"table1_constants", "displayed constant 1; rows 2,3 scaled by c, sqrt(c)"},
      {"denominator", "gamma sqrt(m), ||X||_F unnormalized, as printed"}};
  return j;
}

}  // namespace capmeter
