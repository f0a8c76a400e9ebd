#ifndef ACTIVEBED_ADJOINT_HPP
#define ACTIVEBED_ADJOINT_HPP

// Discrete adjoint of the forward-Euler solver.
//
// The forward recursion is u_{n+1} = u_n + dt_n (M(t_n) u_n + S) with
// M = A - B(t). For an objective L(u_{k_1}, ..., u_{k_m}) the adjoint runs
//
//   lambda_N = dL/du_N,
//   lambda_n = lambda_{n+1} + dt_n M(t_n)^T lambda_{n+1} + dL/du_n,
//
// and the gradient with respect to a time-independent source is
// dL/dS = sum_n dt_n lambda_{n+1}. Because the recursion transposes the exact
// forward steps, the gradient is that of the discrete objective to rounding.

#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include "activebed/grid_pde.hpp"

namespace activebed {

/// dL/du at one node of the schedule: `coefficient` times the bilinear
/// observation weights at `location`.
struct AdjointSeed {
  double time = 0.0;
  Point location;
  double coefficient = 1.0;
};

struct AdjointState {
  std::vector<double> times;
  /// lambda at every schedule node (empty unless requested).
  std::vector<std::vector<double>> lambda;
  /// lambda at t = 0, i.e. dL/du(0).
  std::vector<double> initial;
  /// sum_n dt_n lambda_{n+1}, i.e. dL/dS for a time-independent source.
  std::vector<double> integrated;
};

inline AdjointState adjoint_solve(const JacobianOperator &op, const TimeSchedule &schedule,
                                  std::span<const AdjointSeed> seeds, bool store_all = false) {
  const GridSpec &grid = op.grid();
  const std::size_t n_nodes = schedule.times.size();
  // Map each seed onto its schedule node.
  std::vector<std::vector<const AdjointSeed *>> at_node(n_nodes);
  for (const AdjointSeed &s : seeds) {
    const std::size_t idx = schedule.node_at(s.time);
    if (idx == static_cast<std::size_t>(-1))
      throw std::out_of_range("adjoint seed at t=" + std::to_string(s.time) +
                              " does not match a stored trajectory node");
    at_node[idx].push_back(&s);
  }
  auto add_seeds = [&](std::size_t node, std::vector<double> &lambda) {
    for (const AdjointSeed *s : at_node[node]) {
      const ObservationStencil st = observation_stencil(grid, s->location);
      for (int k = 0; k < 4; ++k) lambda[st.nodes[k]] += s->coefficient * st.weights[k];
    }
  };

  AdjointState out;
  out.times = schedule.times;
  std::vector<double> lambda(grid.size(), 0.0), next(grid.size(), 0.0), tmp(grid.size(), 0.0);
  out.integrated.assign(grid.size(), 0.0);
  add_seeds(n_nodes - 1, lambda);
  if (store_all) out.lambda.assign(n_nodes, {});
  if (store_all) out.lambda[n_nodes - 1] = lambda;
  for (std::size_t n = schedule.steps(); n-- > 0;) {
    const double dt = schedule.sizes[n];
    for (std::size_t i = 0; i < lambda.size(); ++i) out.integrated[i] += dt * lambda[i];
    op.multiply_transpose(schedule.times[n], lambda, tmp);
    for (std::size_t i = 0; i < lambda.size(); ++i) next[i] = lambda[i] + dt * tmp[i];
    std::swap(lambda, next);
    add_seeds(n, lambda);
    if (store_all) out.lambda[n] = lambda;
  }
  out.initial = lambda;
  return out;
}

} // namespace activebed

#endif // ACTIVEBED_ADJOINT_HPP
