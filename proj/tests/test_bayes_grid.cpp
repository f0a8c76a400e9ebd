#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "activebed/bayes_grid.hpp"
#include "test_support.hpp"

using namespace activebed;
using activebed::testing::random_simplex;
using activebed::testing::random_vector;

namespace {

PredictionTable random_table(const std::vector<Design> &designs, std::size_t nodes, std::mt19937_64 &rng) {
  std::vector<std::vector<double>> v;
  for (std::size_t i = 0; i < designs.size(); ++i) v.push_back(random_vector(nodes, rng, 0.0, 0.5));
  return PredictionTable(designs, v);
}

} // namespace

TEST(Bayes, SequentialEqualsBatch) {
  std::mt19937_64 rng(41);
  const ParamGrid grid = ParamGrid::uniform(0.0, 1.0, 21);
  const NoiseModel noise{0.05};
  for (int set = 0; set < 5; ++set) {
    std::vector<Design> designs;
    for (int k = 0; k < 4; ++k) designs.push_back({0.1 * k, 0.2, 0.05 * (k + 1)});
    const PredictionTable table = random_table(designs, grid.size(), rng);
    std::vector<Measurement> ys;
    for (const Design &d : designs) ys.push_back({d, random_vector(1, rng, 0.0, 0.5)[0]});

    ParamPosterior seq = ParamPosterior::uniform(grid);
    for (const Measurement &y : ys) seq = bayes_update(seq, y, table, noise).posterior;

    std::vector<double> joint(grid.size(), 0.0);
    for (const Measurement &y : ys) {
      const std::vector<double> ll = log_likelihoods(y, table.at(y.design), noise);
      for (std::size_t i = 0; i < joint.size(); ++i) joint[i] += ll[i];
    }
    const ParamPosterior batch = bayes_update_log(ParamPosterior::uniform(grid), joint).posterior;
    for (std::size_t i = 0; i < grid.size(); ++i) EXPECT_NEAR(seq.mass[i], batch.mass[i], 1e-12);
  }
}

// Direct product-of-densities oracle in long double.
TEST(Bayes, MatchesDirectProduct) {
  std::mt19937_64 rng(42);
  const ParamGrid grid = ParamGrid::uniform(0.0, 1.0, 6);
  const std::vector<double> prior_mass = random_simplex(grid.size(), rng);
  const ParamPosterior prior{grid, prior_mass};
  const Design d{0.5, 0.5, 0.05};
  const PredictionTable table = random_table({d}, grid.size(), rng);
  const Measurement y{d, 0.2};
  const NoiseModel noise{0.1};
  const ParamPosterior post = bayes_update(prior, y, table, noise).posterior;
  long double total = 0.0L;
  std::vector<long double> w(grid.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const long double r = y.value - table.at(0)[i];
    w[i] = prior_mass[i] * std::exp(-r * r / (2.0L * 0.01L));
    total += w[i];
  }
  double mass = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    EXPECT_NEAR(post.mass[i], static_cast<double>(w[i] / total), 1e-14);
    mass += post.mass[i];
  }
  EXPECT_NEAR(mass, 1.0, 1e-14);
}

TEST(Bayes, UnderflowIsAFault) {
  const ParamGrid grid = ParamGrid::uniform(0.0, 1.0, 3);
  std::vector<double> ll(grid.size(), -std::numeric_limits<double>::infinity());
  EXPECT_THROW(bayes_update_log(ParamPosterior::uniform(grid), ll), NumericalFault);
}

// Far-off measurements underflow every density in linear space but not in
// log space.
TEST(Bayes, FarMeasurementsStayNormalized) {
  const ParamGrid grid = ParamGrid::uniform(0.0, 1.0, 2);
  const Design d{0.5, 0.5, 0.05};
  const PredictionTable table({d}, {{0.0, 1.0, 2.0, 1.5}});
  const ParamPosterior post = bayes_update(ParamPosterior::uniform(grid), {d, 50.0}, table, NoiseModel{0.05}).posterior;
  EXPECT_NEAR(post.mass[2], 1.0, 1e-12);
}

TEST(Kld, MatchesLongDoubleOracle) {
  std::mt19937_64 rng(43);
  for (int trial = 0; trial < 20; ++trial) {
    const std::vector<double> p = random_simplex(50, rng), q = random_simplex(50, rng);
    long double want = 0.0L;
    for (std::size_t i = 0; i < p.size(); ++i) want += p[i] * std::log(static_cast<long double>(p[i]) / q[i]);
    EXPECT_NEAR(kld_masses(p, q), static_cast<double>(want), 1e-13);
  }
}

TEST(Kld, NonnegativeAndZeroOnlyForEqual) {
  std::mt19937_64 rng(44);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + trial % 40;
    const std::vector<double> p = random_simplex(n, rng), q = random_simplex(n, rng);
    EXPECT_GE(kld_masses(p, q), 0.0);
    EXPECT_EQ(kld_masses(p, p), 0.0);
  }
}

TEST(Kld, ZeroMassConventionsAndContinuity) {
  EXPECT_NEAR(kld_masses(std::vector<double>{1.0, 0.0}, std::vector<double>{0.5, 0.5}), std::log(2.0), 1e-15);
  EXPECT_THROW(kld_masses(std::vector<double>{0.5, 0.5}, std::vector<double>{1.0, 0.0}), NumericalFault);
}

TEST(Estimates, MapTiesAndTopM) {
  ParamGrid grid = ParamGrid::uniform(0.0, 1.0, 3);
  ParamPosterior post{grid, {0.1, 0.3, 0.0, 0.3, 0.1, 0.05, 0.05, 0.1, 0.0}};
  EXPECT_EQ(map_estimate(post), 1u); // first of the two 0.3 entries
  const Point top2 = top_m_mean(post, 2); // nodes 1 (0.5, 0) and 3 (0, 0.5)
  EXPECT_NEAR(top2.x, 0.25, 1e-15);
  EXPECT_NEAR(top2.y, 0.25, 1e-15);
  const Point top1 = top_m_mean(post, 1);
  EXPECT_EQ(top1, grid.node(1));
  EXPECT_THROW(top_m_mean(post, 0), std::invalid_argument);
}

TEST(ParamGrid, NodeLayout) {
  const ParamGrid g = ParamGrid::uniform(0.0, 1.0, 51);
  EXPECT_EQ(g.size(), 2601u);
  EXPECT_NEAR(g.node(51 * 12 + 22).x, 0.44, 1e-15);
  EXPECT_NEAR(g.node(51 * 12 + 22).y, 0.24, 1e-15);
  EXPECT_EQ(g.node(2600).x, 1.0);
}
