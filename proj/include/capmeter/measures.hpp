#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "capmeter/linalg.hpp"
#include "capmeter/nn.hpp"

namespace capmeter {

/// Unit capacity beta_i: l2 distance of hidden unit i's incoming weights from
/// their initialization.
inline Vector unit_capacities(const TwoLayerNet& net) {
  net.validate();
  const std::size_t h = net.hidden_units();
  const std::size_t d = net.input_dim();
  Vector beta(h);
  for (std::size_t i = 0; i < h; ++i) {
    double acc = 0.0;
    const double* u = net.U.row_ptr(i);
    const double* u0 = net.U0.row_ptr(i);
    for (std::size_t j = 0; j < d; ++j) {
      const double delta = u[j] - u0[j];
      acc += delta * delta;
    }
    beta[i] = std::sqrt(acc);
  }
  return beta;
}

/// Unit impact alpha_i: l2 norm of hidden unit i's outgoing weights
/// (column i of V).
inline Vector unit_impacts(const TwoLayerNet& net) {
  net.validate();
  const std::size_t h = net.hidden_units();
  const std::size_t c = net.num_classes();
  Vector alpha(h, 0.0);
  for (std::size_t k = 0; k < c; ++k) {
    const double* v = net.V.row_ptr(k);
    for (std::size_t i = 0; i < h; ++i) alpha[i] += v[i] * v[i];
  }
  for (double& a : alpha) a = std::sqrt(a);
  return alpha;
}

constexpr std::size_t kAngleHistogramBins = 36;

struct MeasurePanel {
  Vector beta;        // unit capacities
  Vector alpha;       // unit impacts
  Vector angles_deg;  // angle of u_i to u_i^0; NaN where degenerate
  std::vector<bool> angle_valid;
  std::array<std::size_t, kAngleHistogramBins> angle_hist{};  // over [0,180]

  double fro_U = 0, fro_V = 0, fro_dU = 0, fro_dV = 0;
  double spec_U = 0, spec_U0 = 0, spec_V = 0;
  bool spectral_converged = true;

  // Group norms along the unit-indexed axis, keyed "<matrix>:<p>,<q>".
  std::map<std::string, double> group_norms;

  Vector margins;
  double gamma_5pct = 0.0;
};

/// Fills every panel field for one trained net on one dataset. gamma is the
/// `gamma_percentile` nearest-rank percentile of the margin distribution.
/// Angles are computed only for units whose current and initial weights both
/// have norm > 1e-30; other units are flagged, not fatal.
inline MeasurePanel measure_panel(const TwoLayerNet& net,
                                  const LabeledDataset& data,
                                  double gamma_percentile = 5.0) {
  net.validate();
  MeasurePanel panel;
  panel.beta = unit_capacities(net);
  panel.alpha = unit_impacts(net);

  const std::size_t h = net.hidden_units();
  panel.angles_deg.assign(h, std::numeric_limits<double>::quiet_NaN());
  panel.angle_valid.assign(h, false);
  for (std::size_t i = 0; i < h; ++i) {
    const Vector u = net.U.row(i);
    const Vector u0 = net.U0.row(i);
    if (norm2(u) < 1e-30 || norm2(u0) < 1e-30) continue;
    panel.angles_deg[i] = angle_degrees(u, u0);
    panel.angle_valid[i] = true;
    auto bin = static_cast<std::size_t>(panel.angles_deg[i] /
                                        (180.0 / kAngleHistogramBins));
    if (bin >= kAngleHistogramBins) bin = kAngleHistogramBins - 1;
    ++panel.angle_hist[bin];
  }

  const DenseMatrix du = subtract(net.U, net.U0);
  const DenseMatrix dv = subtract(net.V, net.V0);
  panel.fro_U = frobenius_norm(net.U);
  panel.fro_V = frobenius_norm(net.V);
  panel.fro_dU = frobenius_norm(du);
  panel.fro_dV = frobenius_norm(dv);

  const auto spec_u = spectral_norm(net.U);
  const auto spec_u0 = spectral_norm(net.U0);
  const auto spec_v = spectral_norm(net.V);
  panel.spec_U = spec_u.value;
  panel.spec_U0 = spec_u0.value;
  panel.spec_V = spec_v.value;
  panel.spectral_converged =
      spec_u.converged && spec_u0.converged && spec_v.converged;

  const double inf = std::numeric_limits<double>::infinity();
  panel.group_norms["U:inf,1"] = group_norm(net.U, Axis::rows, inf, 1);
  panel.group_norms["V:inf,1"] = group_norm(net.V, Axis::rows, inf, 1);
  panel.group_norms["dU:1,2"] = group_norm(du, Axis::rows, 1.0, 2);
  panel.group_norms["dV:1,2"] = group_norm(dv, Axis::cols, 1.0, 2);

  panel.margins = margin_distribution(net, data);
  panel.gamma_5pct = percentile_nearest_rank(panel.margins, gamma_percentile);
  return panel;
}

/// The capacity numerator of the Frobenius-norm generalization bound:
/// sqrt(c) * ||V||_F * (||U-U0||_F ||X||_F + ||U0 X||_F), with X holding the
/// samples as columns so U0 X is h x m.
inline double capacity_numerator(const TwoLayerNet& net,
                                 const LabeledDataset& data) {
  net.validate();
  const double fro_x = frobenius_norm(data.X);
  const double fro_du = frobenius_norm(subtract(net.U, net.U0));
  const double fro_u0x = frobenius_norm(multiply_nt(data.X, net.U0));
  return std::sqrt(static_cast<double>(net.num_classes())) *
         frobenius_norm(net.V) * (fro_du * fro_x + fro_u0x);
}

/// Margins divided by the capacity numerator above.
inline Vector normalized_margins(const TwoLayerNet& net,
                                 const LabeledDataset& data) {
  const double denom = capacity_numerator(net, data);
  if (!(denom > 0.0))
    throw std::runtime_error("normalized_margins: zero capacity normalizer");
  Vector margins = margin_distribution(net, data);
  for (double& mu : margins) mu /= denom;
  return margins;
}

inline nlohmann::ordered_json panel_to_json(const MeasurePanel& panel) {
  nlohmann::ordered_json j;
  j["alpha"] = panel.alpha;
  j["beta"] = panel.beta;
  nlohmann::ordered_json angles = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < panel.angles_deg.size(); ++i)
    angles.push_back(panel.angle_valid[i]
                         ? nlohmann::ordered_json(panel.angles_deg[i])
                         : nlohmann::ordered_json(nullptr));
  j["angles_deg"] = std::move(angles);
  j["angle_hist_bins"] = kAngleHistogramBins;
  j["angle_hist"] = panel.angle_hist;
  j["fro_U"] = panel.fro_U;
  j["fro_V"] = panel.fro_V;
  j["fro_dU"] = panel.fro_dU;
  j["fro_dV"] = panel.fro_dV;
  j["spec_U"] = panel.spec_U;
  j["spec_U0"] = panel.spec_U0;
  j["spec_V"] = panel.spec_V;
  j["spectral_converged"] = panel.spectral_converged;
  j["group_norms"] = panel.group_norms;
  j["margins"] = panel.margins;
  j["gamma_5pct"] = panel.gamma_5pct;
  j["conventions"] = {
      {"group_norm_axis", "hidden units (rows of U/dU, columns of V/dV)"},
      {"inf_1_norm", "max over rows of row l1 norms"},
      {"design_matrix", "samples as columns for ||U0 X||"},
      {"percentile", "nearest-rank"}};
  return j;
}

}  // namespace capmeter
