#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "activebed/bed_design.hpp"
#include "test_support.hpp"

using namespace activebed;

TEST(Candidates, LatticeInsideMoveBox) {
  const DesignConstraint c;
  const std::vector<Design> cs = candidates({0.5, 0.5, 0.0}, c, 5);
  ASSERT_EQ(cs.size(), 25u);
  for (const Design &d : cs) {
    EXPECT_LE(std::abs(d.x - 0.5), 0.2 + 1e-12);
    EXPECT_LE(std::abs(d.y - 0.5), 0.2 + 1e-12);
    EXPECT_DOUBLE_EQ(d.t, 0.05);
  }
}

TEST(Candidates, ClippedAtCornerWithoutDuplicates) {
  const DesignConstraint c;
  const std::vector<Design> cs = candidates({0.0, 1.0, 0.1}, c, 5);
  EXPECT_EQ(cs.size(), 9u); // offsets {0, 0.1, 0.2} survive on each axis
  for (std::size_t i = 0; i < cs.size(); ++i) {
    EXPECT_GE(cs[i].x, 0.0);
    EXPECT_LE(cs[i].y, 1.0);
    for (std::size_t j = i + 1; j < cs.size(); ++j) EXPECT_FALSE(cs[i] == cs[j]);
  }
}

TEST(Candidates, RandomWalkAlwaysFeasible) {
  std::mt19937_64 rng(51);
  const DesignConstraint c;
  Design d{0.5, 0.5, 0.0};
  for (int stage = 0; stage < 200; ++stage) {
    const std::vector<Design> cs = candidates(d, c, 5);
    const Design next = cs[std::uniform_int_distribution<std::size_t>(0, cs.size() - 1)(rng)];
    EXPECT_LE(std::max(std::abs(next.x - d.x), std::abs(next.y - d.y)), c.max_move + 1e-12);
    EXPECT_GE(std::min(next.x, next.y), c.lower);
    EXPECT_LE(std::max(next.x, next.y), c.upper);
    d = next;
  }
}

// Two equally likely atoms predicting 0 and 1: the posterior after y has
// masses proportional to the two Gaussian densities.
TEST(InformationGain, TwoAtomRealizedGain) {
  const ParamGrid grid = ParamGrid::uniform(0.0, 1.0, 2);
  ParamPosterior prior{grid, {0.5, 0.0, 0.5, 0.0}};
  const Design d{0.5, 0.5, 0.05};
  const PredictionTable table({d}, {{0.0, 0.0, 1.0, 0.0}});
  const NoiseModel noise{0.5};
  const double y = 0.3;
  const InformationGain ig = realized_ig(prior, d, [&](const Design &dd) { return Measurement{dd, y}; }, table, noise);
  const double a = std::exp(-y * y / 0.5), b = std::exp(-(y - 1) * (y - 1) / 0.5);
  const double pa = a / (a + b), pb = b / (a + b);
  EXPECT_NEAR(ig.nats, pa * std::log(pa / 0.5) + pb * std::log(pb / 0.5), 1e-14);
  EXPECT_NEAR(ig.posterior.mass[0], pa, 1e-14);
}

// EIG of the two-atom problem equals the mutual information between the atom
// and y, computed here by quadrature over y.
TEST(InformationGain, ExpectedGainMatchesQuadrature) {
  const ParamGrid grid = ParamGrid::uniform(0.0, 1.0, 2);
  ParamPosterior prior{grid, {0.3, 0.0, 0.7, 0.0}};
  const Design d{0.5, 0.5, 0.05};
  const PredictionTable table({d}, {{0.0, 0.0, 1.0, 0.0}});
  const NoiseModel noise{0.5};
  double mi = 0.0;
  const double dy = 1e-3;
  for (double y = -5.0; y <= 6.0; y += dy) {
    const double fa = noise.density(y), fb = noise.density(y - 1.0);
    const double m = 0.3 * fa + 0.7 * fb;
    mi += dy * (0.3 * fa * std::log(fa / m) + 0.7 * fb * std::log(fb / m));
  }
  const double eig = expected_ig(prior, d, table, noise, 40000, 5);
  EXPECT_NEAR(eig, mi, 0.03 * mi);
}

TEST(Selection, ArgmaxTiesGoToFirst) {
  std::vector<ScoredCandidate> t(4);
  t[0].score = 0.1;
  t[1].score = 0.4;
  t[2].score = 0.4;
  t[3].score = 0.2;
  EXPECT_EQ(argmax_score(t), 1u);
  EXPECT_THROW(argmax_score({}), std::invalid_argument);
}

TEST(Selection, MeasuredModePicksLargestRealizedGain) {
  const ParamGrid grid = ParamGrid::uniform(0.0, 1.0, 2);
  const ParamPosterior prior = ParamPosterior::uniform(grid);
  const std::vector<Design> cs{{0.1, 0.1, 0.05}, {0.2, 0.2, 0.05}};
  // The second design separates the atoms; the first does not.
  const PredictionTable table(cs, {{0.5, 0.5, 0.5, 0.5}, {0.0, 1.0, 0.0, 1.0}});
  const Measurer truth = [](const Design &d) { return Measurement{d, 1.0}; };
  const Selection s = select_design(prior, cs, SelectionMode::Measured, table, NoiseModel{0.1}, truth, 1, 0);
  EXPECT_EQ(s.chosen, 1u);
  EXPECT_NEAR(s.table[0].score, 0.0, 1e-15);
  ASSERT_TRUE(s.winner().measurement.has_value());
  const Selection p = select_design(prior, cs, SelectionMode::Predictive, table, NoiseModel{0.1}, truth, 64, 3);
  EXPECT_EQ(p.chosen, 1u);
}
