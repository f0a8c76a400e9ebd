#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "activebed/grid_pde.hpp"
#include "activebed/simulator.hpp"
#include "test_support.hpp"

using namespace activebed;
using activebed::testing::max_abs_diff;
using activebed::testing::random_vector;

namespace {

// Independent reference: pad the field with one ghost layer mirrored about
// the boundary (u_{-1} = u_1), then apply the plain 5-point Laplacian and
// central differences everywhere.
std::vector<double> ghost_rhs(const GridSpec &g, const std::vector<double> &u, const std::vector<double> &s,
                              double vx, double vy) {
  const int n = g.n_points;
  const int m = n + 2;
  std::vector<double> pad(static_cast<std::size_t>(m * m));
  auto src = [&](int i) { return i < 0 ? -i : (i >= n ? 2 * (n - 1) - i : i); };
  for (int j = -1; j <= n; ++j)
    for (int i = -1; i <= n; ++i) pad[(j + 1) * m + (i + 1)] = u[g.index(src(i), src(j))];
  const double h = g.spacing();
  std::vector<double> out(g.size());
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      auto at = [&](int di, int dj) { return pad[(j + 1 + dj) * m + (i + 1 + di)]; };
      const double lap = (at(1, 0) + at(-1, 0) + at(0, 1) + at(0, -1) - 4 * at(0, 0)) / (h * h);
      const double adv = vx * (at(1, 0) - at(-1, 0)) / (2 * h) + vy * (at(0, 1) - at(0, -1)) / (2 * h);
      out[g.index(i, j)] = lap - adv + s[g.index(i, j)];
    }
  return out;
}

double trapezoid_sum(const GridSpec &g, const std::vector<double> &u) {
  const int n = g.n_points;
  double acc = 0.0;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const double wx = (i == 0 || i == n - 1) ? 0.5 : 1.0;
      const double wy = (j == 0 || j == n - 1) ? 0.5 : 1.0;
      acc += wx * wy * u[g.index(i, j)];
    }
  return acc;
}

} // namespace

TEST(GridSpec, SpacingCoversDomain) {
  for (int n : {3, 5, 11, 101}) {
    const GridSpec g = GridSpec::make(-2.0, 3.0, n);
    EXPECT_NEAR(g.spacing() * (n - 1), 5.0, 1e-14);
    EXPECT_EQ(g.coord(0), -2.0);
    EXPECT_EQ(g.coord(n - 1), 3.0);
  }
  EXPECT_THROW(GridSpec::make(-2.0, 3.0, 2), ConfigError);
  EXPECT_THROW(GridSpec::make(1.0, 1.0, 5), ConfigError);
}

TEST(ApplyRhs, MatchesGhostPointReference) {
  std::mt19937_64 rng(11);
  for (int n : {5, 7, 11, 21}) {
    const GridSpec g = GridSpec::make(-2.0, 3.0, n);
    for (int trial = 0; trial < 10; ++trial) {
      const StateField u{g, random_vector(g.size(), rng), 0.0};
      const std::vector<double> s = random_vector(g.size(), rng);
      const double t = 0.03 * trial;
      const VelocityModel v{20.0};
      const std::vector<double> got = apply_rhs(u, v, s, t);
      const std::vector<double> want = ghost_rhs(g, u.values, s, v.at(t).x, v.at(t).y);
      EXPECT_LT(max_abs_diff(got, want), 1e-11) << "n=" << n;
    }
  }
}

TEST(Jacobian, OperatorReproducesRhs) {
  std::mt19937_64 rng(12);
  for (int n : {5, 7, 11}) {
    const GridSpec g = GridSpec::make(-2.0, 3.0, n);
    const JacobianOperator op(g, VelocityModel{50.0});
    for (int trial = 0; trial < 20; ++trial) {
      const StateField u{g, random_vector(g.size(), rng), 0.0};
      const std::vector<double> s = random_vector(g.size(), rng);
      const double t = 0.25 * trial / 20.0;
      const Eigen::Map<const Eigen::VectorXd> uv(u.values.data(), static_cast<Eigen::Index>(g.size()));
      const Eigen::VectorXd mu = op.at(t) * uv;
      std::vector<double> fused(g.size());
      op.multiply(t, u.values, fused);
      const std::vector<double> rhs = apply_rhs(u, op.velocity(), s, t);
      for (std::size_t i = 0; i < g.size(); ++i) {
        EXPECT_NEAR(mu[static_cast<Eigen::Index>(i)] + s[i], rhs[i], 1e-12 * std::max(1.0, std::abs(rhs[i])));
        EXPECT_NEAR(fused[i] + s[i], rhs[i], 1e-12 * std::max(1.0, std::abs(rhs[i])));
      }
    }
  }
}

TEST(Jacobian, InteriorRowsSumToZero) {
  for (int n : {5, 7, 11, 31}) {
    const GridSpec g = GridSpec::make(-2.0, 3.0, n);
    const JacobianOperator op(g, VelocityModel{20.0});
    for (double t : {0.0, 0.1, 0.25}) {
      const SparseMatrix a = op.laplacian();
      const SparseMatrix b = op.advection(t);
      for (int iy = 1; iy < n - 1; ++iy)
        for (int ix = 1; ix < n - 1; ++ix) {
          const int r = static_cast<int>(g.index(ix, iy));
          EXPECT_NEAR(a.row(r).sum(), 0.0, 1e-12 / (g.spacing() * g.spacing()));
          EXPECT_NEAR(b.row(r).sum(), 0.0, 1e-12);
        }
    }
  }
}

TEST(Jacobian, TransposeProductIsAdjoint) {
  std::mt19937_64 rng(13);
  const GridSpec g = GridSpec::make(-2.0, 3.0, 15);
  const JacobianOperator op(g, VelocityModel{20.0});
  const std::vector<double> x = random_vector(g.size(), rng), y = random_vector(g.size(), rng);
  std::vector<double> mx(g.size()), mty(g.size());
  op.multiply(0.1, x, mx);
  op.multiply_transpose(0.1, y, mty);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    lhs += y[i] * mx[i];
    rhs += mty[i] * x[i];
  }
  EXPECT_NEAR(lhs, rhs, 1e-10 * std::abs(lhs));
}

TEST(Integrator, SubstepsRespectStabilityAndCoverInterval) {
  const GridSpec g = GridSpec::make(-2.0, 3.0, 101);
  const VelocityModel v{50.0};
  const double h = g.spacing();
  for (double t0 : {0.0, 0.05, 0.2}) {
    const std::vector<double> sizes = substep_sizes(g, v, t0, 0.05);
    double sum = 0.0, t = t0;
    for (double dt : sizes) {
      const double limit = std::min(0.9 * h * h / 4.0, 0.5 * h / std::max(std::hypot(v.at(t).x, v.at(t).y), 1e-300));
      EXPECT_LE(dt, limit * (1 + 1e-12));
      sum += dt;
      t += dt;
    }
    EXPECT_NEAR(sum, 0.05, 1e-14);
  }
}

TEST(Integrator, StepAndScheduleAgree) {
  std::mt19937_64 rng(14);
  const GridSpec g = GridSpec::make(-2.0, 3.0, 21);
  const VelocityModel v{20.0};
  const std::vector<double> s = random_vector(g.size(), rng, 0.0, 1.0);
  StateField a = StateField::zeros(g);
  for (int k = 0; k < 3; ++k) a = step(a, v, s, 0.05);
  const StateField b = integrate(StateField::zeros(g), v, s, build_schedule(g, v, 0.15, 0.05));
  EXPECT_NEAR(a.time, 0.15, 1e-15);
  EXPECT_LT(max_abs_diff(a.values, b.values), 1e-14);
}

TEST(Integrator, ZeroSourceStaysZero) {
  const GridSpec g = GridSpec::make(-2.0, 3.0, 21);
  const std::vector<double> s(g.size(), 0.0);
  const StateField u = integrate(StateField::zeros(g), VelocityModel{50.0}, s, build_schedule(g, {50.0}, 0.25, 0.05));
  for (double x : u.values) EXPECT_EQ(x, 0.0);
}

// With no flow and reflecting boundaries the trapezoid-weighted total grows
// exactly at the rate of the injected source.
TEST(Integrator, DiffusionConservesTrapezoidMass) {
  std::mt19937_64 rng(15);
  const GridSpec g = GridSpec::make(-2.0, 3.0, 25);
  const std::vector<double> s = random_vector(g.size(), rng, 0.0, 1.0);
  const VelocityModel still{0.0};
  const StateField u = integrate(StateField::zeros(g), still, s, build_schedule(g, still, 0.1, 0.05));
  EXPECT_NEAR(trapezoid_sum(g, u.values), 0.1 * trapezoid_sum(g, s), 1e-11 * trapezoid_sum(g, s));
}

TEST(Integrator, ObservationConvergesUnderRefinement) {
  const SourceTerm src = SourceTerm::true_exponential({0.45, 0.25, 0.3, 2.0});
  const Point probe{0.6, 0.5};
  std::vector<double> obs;
  for (int n : {41, 81, 161}) {
    const Simulator sim(GridSpec::make(-2.0, 3.0, n), VelocityModel{20.0}, 0.05);
    obs.push_back(observe(sim.solve(src, 0.1), probe));
  }
  EXPECT_LT(std::abs(obs[1] - obs[2]) / std::abs(obs[2]), 0.02);
  EXPECT_LT(std::abs(obs[1] - obs[2]), std::abs(obs[0] - obs[1]));
}

TEST(Observation, BilinearFunctionsAreExact) {
  const GridSpec g = GridSpec::make(-2.0, 3.0, 11);
  StateField f = StateField::zeros(g);
  auto fn = [](Point z) { return 1.5 - 0.3 * z.x + 2.0 * z.y + 0.7 * z.x * z.y; };
  for (int iy = 0; iy < g.n_points; ++iy)
    for (int ix = 0; ix < g.n_points; ++ix) f.values[g.index(ix, iy)] = fn(g.node(ix, iy));
  std::mt19937_64 rng(16);
  std::uniform_real_distribution<double> coord(-2.0, 3.0);
  for (int k = 0; k < 200; ++k) {
    const Point p{coord(rng), coord(rng)};
    EXPECT_NEAR(observe(f, p), fn(p), 1e-12);
  }
  EXPECT_NEAR(observe(f, {3.0, 3.0}), fn({3.0, 3.0}), 1e-12);
  EXPECT_THROW(observe(f, {3.5, 0.0}), std::out_of_range);
}

TEST(Jacobian, ThreeByThreeCenterRow) {
  const GridSpec g = GridSpec::make(-1.0, 1.0, 3);
  const JacobianOperator op(g, VelocityModel{0.0});
  const SparseMatrix m = op.at(0.3);
  const int c = static_cast<int>(g.index(1, 1));
  const double h2 = g.spacing() * g.spacing();
  for (int col = 0; col < 9; ++col) {
    const double want = col == c ? -4.0 / h2 : (col == c - 1 || col == c + 1 || col == c - 3 || col == c + 3) ? 1.0 / h2 : 0.0;
    EXPECT_DOUBLE_EQ(m.coeff(c, col), want);
  }
}

TEST(Integrator, SingleSubstepIsForwardEuler) {
  std::mt19937_64 rng(17);
  const GridSpec g = GridSpec::make(-2.0, 3.0, 11);
  const VelocityModel v{20.0};
  const StateField u{g, random_vector(g.size(), rng), 0.0};
  const std::vector<double> s = random_vector(g.size(), rng);
  const double dt = 1e-3; // below both stability limits on this grid
  ASSERT_EQ(substep_sizes(g, v, 0.0, dt).size(), 1u);
  const StateField next = step(u, v, s, dt);
  const std::vector<double> rate = apply_rhs(u, v, s, 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_DOUBLE_EQ(next.values[i], u.values[i] + dt * rate[i]);
}
