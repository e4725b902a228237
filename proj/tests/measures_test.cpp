#include "capmeter/measures.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "capmeter/data.hpp"
#include "capmeter/train.hpp"

using namespace capmeter;

namespace {

TwoLayerNet scalar_net() {
  // c = h = d = 1, U = [[2]], U0 = [[1]], V = [[3]], V0 = [[0]].
  TwoLayerNet net;
  net.U = DenseMatrix::from_rows({{2}});
  net.U0 = DenseMatrix::from_rows({{1}});
  net.V = DenseMatrix::from_rows({{3}});
  net.V0 = DenseMatrix::from_rows({{0}});
  return net;
}

LabeledDataset small_data(std::uint64_t seed) {
  auto data = synthetic_gaussian(4, 25, 3, seed, 2.0);
  return data;
}

}  // namespace

TEST(UnitCapacityTest, AtInitializationAllZero) {
  const auto net = init_network(4, 6, 3, InitScheme::uniform_fan_in, 8);
  for (double b : unit_capacities(net)) EXPECT_EQ(b, 0.0);
}

TEST(UnitCapacityTest, ZeroReferenceGivesRowNorms) {
  auto net = init_network(4, 6, 3, InitScheme::uniform_fan_in, 9);
  net.U0 = DenseMatrix(6, 4);  // zero reference
  const Vector beta = unit_capacities(net);
  for (std::size_t i = 0; i < 6; ++i)
    EXPECT_NEAR(beta[i], norm2(net.U.row(i)), 1e-12);
}

TEST(UnitCapacityTest, MatchesRowSubtractionOracle) {
  auto net = init_network(5, 7, 2, InitScheme::uniform_fan_in, 10);
  // Nudge U as one SGD step would.
  for (double& v : net.U.data()) v += 0.01;
  const Vector beta = unit_capacities(net);
  for (std::size_t i = 0; i < 7; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < 5; ++j) {
      const double diff = net.U(i, j) - net.U0(i, j);
      acc += diff * diff;
    }
    EXPECT_NEAR(beta[i], std::sqrt(acc), 1e-12);
  }
}

TEST(UnitImpactTest, ZeroAndIdentity) {
  TwoLayerNet net;
  net.U = DenseMatrix(3, 2);
  net.U0 = DenseMatrix(3, 2);
  net.V = DenseMatrix(3, 3);
  net.V0 = DenseMatrix(3, 3);
  for (double a : unit_impacts(net)) EXPECT_EQ(a, 0.0);
  net.V = DenseMatrix::identity(3);
  for (double a : unit_impacts(net)) EXPECT_EQ(a, 1.0);
}

TEST(UnitImpactTest, MatchesColumnLoopOracle) {
  const auto net = init_network(3, 6, 4, InitScheme::uniform_fan_in, 11);
  const Vector alpha = unit_impacts(net);
  for (std::size_t i = 0; i < 6; ++i)
    EXPECT_NEAR(alpha[i], norm2(net.V.col(i)), 1e-12);
}

TEST(MeasureScalarCaseTest, HandComputedValues) {
  const auto net = scalar_net();
  EXPECT_EQ(unit_capacities(net)[0], 1.0);
  EXPECT_EQ(unit_impacts(net)[0], 3.0);
  EXPECT_EQ(frobenius_norm(subtract(net.V, net.V0)), 3.0);
}

TEST(MeasurePanelTest, AtInitialization) {
  const auto net = init_network(4, 6, 3, InitScheme::uniform_fan_in, 21);
  const auto data = small_data(21);
  const auto panel = measure_panel(net, data);
  EXPECT_EQ(panel.fro_dU, 0.0);
  EXPECT_EQ(panel.fro_dV, 0.0);
  for (double b : panel.beta) EXPECT_EQ(b, 0.0);
  EXPECT_EQ(panel.margins.size(), data.size());
  EXPECT_EQ(panel.gamma_5pct, percentile_nearest_rank(panel.margins, 5.0));
}

TEST(MeasurePanelTest, NormIdentities) {
  auto data = small_data(31);
  auto net = init_network(4, 16, 3, InitScheme::uniform_fan_in, 31);
  TrainConfig cfg;
  cfg.max_epochs = 20;
  train(net, data, cfg);
  const auto panel = measure_panel(net, data);
  EXPECT_NEAR(norm2(panel.beta), panel.fro_dU, 1e-9);
  EXPECT_NEAR(norm2(panel.alpha), panel.fro_V, 1e-9);
}

TEST(MeasurePanelTest, DegenerateUnitsAreFlaggedNotFatal) {
  auto net = init_network(4, 5, 3, InitScheme::uniform_fan_in, 41);
  for (std::size_t j = 0; j < 4; ++j) {
    net.U(2, j) = 0.0;
    net.U0(2, j) = 0.0;
  }
  const auto panel = measure_panel(net, small_data(41));
  EXPECT_FALSE(panel.angle_valid[2]);
  EXPECT_TRUE(std::isnan(panel.angles_deg[2]));
  EXPECT_TRUE(panel.angle_valid[0]);
  EXPECT_EQ(panel.angles_deg[0], 0.0);  // U == U0 for untouched units
}

TEST(MeasurePanelTest, PermutationEquivariance) {
  auto net = init_network(4, 6, 3, InitScheme::uniform_fan_in, 51);
  for (double& v : net.U.data()) v += 0.02;  // make beta nontrivial
  const auto panel = measure_panel(net, small_data(51));

  const std::vector<std::size_t> perm{5, 2, 0, 4, 1, 3};
  TwoLayerNet permuted = net;
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      permuted.U(i, j) = net.U(perm[i], j);
      permuted.U0(i, j) = net.U0(perm[i], j);
    }
    for (std::size_t k = 0; k < 3; ++k) {
      permuted.V(k, i) = net.V(k, perm[i]);
      permuted.V0(k, i) = net.V0(k, perm[i]);
    }
  }
  const auto panel2 = measure_panel(permuted, small_data(51));
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(panel2.alpha[i], panel.alpha[perm[i]]);
    EXPECT_EQ(panel2.beta[i], panel.beta[perm[i]]);
  }
  EXPECT_EQ(panel2.fro_U, panel.fro_U);
  EXPECT_EQ(panel2.fro_V, panel.fro_V);
  EXPECT_NEAR(panel2.spec_U, panel.spec_U, 1e-9);
}

TEST(NormalizedMarginsTest, ExactInvarianceToScalingV) {
  auto data = small_data(61);
  auto net = init_network(4, 8, 3, InitScheme::uniform_fan_in, 61);
  net.U0 = DenseMatrix(8, 4);  // zero reference so the numerator is V-linear
  for (double& v : net.U0.data()) v = 0.0;
  // Make dU nonzero so the normalizer is positive.
  const Vector base = normalized_margins(net, data);
  TwoLayerNet doubled = net;
  for (double& v : doubled.V.data()) v *= 2.0;
  // V0 scaling irrelevant: the numerator uses ||V||_F only.
  const Vector scaled = normalized_margins(doubled, data);
  ASSERT_EQ(scaled.size(), base.size());
  for (std::size_t i = 0; i < base.size(); ++i)
    EXPECT_NEAR(scaled[i], base[i], 1e-12 * std::max(1.0, std::abs(base[i])));
}

TEST(NormalizedMarginsTest, ZeroNormalizerIsAnError) {
  TwoLayerNet net;
  net.U = DenseMatrix(3, 2);
  net.U0 = DenseMatrix(3, 2);
  net.V = DenseMatrix(2, 3);
  net.V0 = DenseMatrix(2, 3);
  LabeledDataset data;
  data.X = DenseMatrix::from_rows({{1, 0}, {0, 1}});
  data.y = {0, 1};
  data.num_classes = 2;
  EXPECT_THROW(normalized_margins(net, data), std::runtime_error);
}

TEST(NormalizedMarginsTest, TwoCodePathsAgree) {
  auto data = small_data(71);
  auto net = init_network(4, 12, 3, InitScheme::uniform_fan_in, 71);
  TrainConfig cfg;
  cfg.max_epochs = 15;
  train(net, data, cfg);
  const Vector fast = normalized_margins(net, data);
  // Second path: per-sample forward + margin, explicit norm products.
  const double denom =
      std::sqrt(3.0) * frobenius_norm(net.V) *
      (frobenius_norm(subtract(net.U, net.U0)) * frobenius_norm(data.X) +
       frobenius_norm(multiply_nt(net.U0, data.X)));
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double mu = margin_operator(forward(net, data.X.row(i)), data.y[i]);
    EXPECT_NEAR(fast[i], mu / denom, 1e-9 * std::max(1.0, std::abs(mu / denom)));
  }
}

TEST(PanelJsonTest, SerializesNullForDegenerateAngles) {
  auto net = init_network(3, 4, 2, InitScheme::uniform_fan_in, 81);
  for (std::size_t j = 0; j < 3; ++j) {
    net.U(1, j) = 0.0;
    net.U0(1, j) = 0.0;
  }
  LabeledDataset data = synthetic_gaussian(3, 10, 2, 81, 1.0);
  const auto j = panel_to_json(measure_panel(net, data));
  EXPECT_TRUE(j["angles_deg"][1].is_null());
  EXPECT_TRUE(j["angles_deg"][0].is_number());
  EXPECT_EQ(j["margins"].size(), 10u);
}

TEST(MeasurePanelTest, AngleHistogramCountsValidUnits) {
  auto net = init_network(4, 6, 3, InitScheme::uniform_fan_in, 87);
  for (double& v : net.U.data()) v += 0.05;
  for (std::size_t j = 0; j < 4; ++j) {
    net.U(3, j) = 0.0;
    net.U0(3, j) = 0.0;
  }
  const auto panel = measure_panel(net, small_data(87));
  std::size_t hist_total = 0;
  for (std::size_t count : panel.angle_hist) hist_total += count;
  std::size_t valid = 0;
  for (bool ok : panel.angle_valid)
    if (ok) ++valid;
  EXPECT_EQ(hist_total, valid);
  EXPECT_EQ(valid, 5u);
}
