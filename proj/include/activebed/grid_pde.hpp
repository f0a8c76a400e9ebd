#ifndef ACTIVEBED_GRID_PDE_HPP
#define ACTIVEBED_GRID_PDE_HPP

// Finite-difference convection-diffusion on a uniform square grid:
//
//   du/dt = lap(u) - v(t) . grad(u) + S(z)
//
// 5-point Laplacian, central advection, homogeneous Neumann boundaries via
// ghost-node reflection (u_ghost = u_interior). Nodes are flattened row-major
// with x fastest: index = iy * n + ix, so x-neighbours sit at +-1 and
// y-neighbours at +-n.

#include <Eigen/Sparse>

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "activebed/common.hpp"

namespace activebed {

struct GridSpec {
  double z_min = -2.0;
  double z_max = 3.0;
  int n_points = 101;

  static GridSpec make(double z_min, double z_max, int n_points) {
    if (n_points < 3) throw ConfigError("grid needs at least 3 points per axis");
    if (!(z_max > z_min)) throw ConfigError("grid bounds must satisfy z_max > z_min");
    return GridSpec{z_min, z_max, n_points};
  }

  double spacing() const { return (z_max - z_min) / (n_points - 1); }
  std::size_t size() const { return static_cast<std::size_t>(n_points) * n_points; }
  std::size_t index(int ix, int iy) const { return static_cast<std::size_t>(iy) * n_points + ix; }
  double coord(int i) const { return i == n_points - 1 ? z_max : z_min + i * spacing(); }
  Point node(int ix, int iy) const { return {coord(ix), coord(iy)}; }
  bool contains(Point p) const {
    const double tol = 1e-12 * (z_max - z_min);
    return p.x >= z_min - tol && p.x <= z_max + tol && p.y >= z_min - tol && p.y <= z_max + tol;
  }
};

inline bool operator==(const GridSpec &a, const GridSpec &b) {
  return a.z_min == b.z_min && a.z_max == b.z_max && a.n_points == b.n_points;
}

struct StateField {
  GridSpec grid;
  std::vector<double> values;
  double time = 0.0;

  static StateField zeros(const GridSpec &grid, double time = 0.0) {
    return StateField{grid, std::vector<double>(grid.size(), 0.0), time};
  }
};

/// Spatially uniform velocity v_x = v_y = coefficient * t.
struct VelocityModel {
  double coefficient = 0.0;
  Point at(double t) const { return {coefficient * t, coefficient * t}; }
};

struct IntegratorSettings {
  double stability_factor = 0.9;
  double cfl_factor = 0.5;
};

/// du/dt at every node for a precomputed source field.
inline std::vector<double> apply_rhs(const StateField &state, const VelocityModel &velocity,
                                     std::span<const double> source, double t) {
  const GridSpec &g = state.grid;
  const int n = g.n_points;
  if (state.values.size() != g.size() || source.size() != g.size())
    throw std::invalid_argument("apply_rhs: field size does not match grid");
  const double h = g.spacing();
  const double inv_h2 = 1.0 / (h * h);
  const double inv_2h = 0.5 / h;
  const Point v = velocity.at(t);
  const double *u = state.values.data();
  std::vector<double> rate(g.size());
  for (int iy = 0; iy < n; ++iy) {
    const int ym_row = (iy > 0 ? iy - 1 : 1) * n;
    const int yp_row = (iy < n - 1 ? iy + 1 : n - 2) * n;
    const int row = iy * n;
    for (int ix = 0; ix < n; ++ix) {
      const double c = u[row + ix];
      const double xm = u[row + (ix > 0 ? ix - 1 : 1)];
      const double xp = u[row + (ix < n - 1 ? ix + 1 : n - 2)];
      const double ym = u[ym_row + ix];
      const double yp = u[yp_row + ix];
      const double lap = (xm + xp + ym + yp - 4.0 * c) * inv_h2;
      const double adv = v.x * (xp - xm) * inv_2h + v.y * (yp - ym) * inv_2h;
      rate[row + ix] = lap - adv + source[row + ix];
    }
  }
  return rate;
}

/// Forward-Euler substep sizes covering [t0, t0 + dt_macro]; the last one is
/// truncated so the sum lands exactly on the macro end time.
inline std::vector<double> substep_sizes(const GridSpec &grid, const VelocityModel &velocity, double t0,
                                         double dt_macro, const IntegratorSettings &settings = {}) {
  if (!(dt_macro > 0.0)) throw std::invalid_argument("step: dt_macro must be positive");
  const double h = grid.spacing();
  const double diffusive = settings.stability_factor * h * h / 4.0;
  const double t_end = t0 + dt_macro;
  std::vector<double> sizes;
  double t = t0;
  while (true) {
    const Point v = velocity.at(t);
    const double speed = std::max(std::hypot(v.x, v.y), std::numeric_limits<double>::epsilon());
    const double dt = std::min(diffusive, settings.cfl_factor * h / speed);
    // The final substep absorbs any sliver left at the end of the interval.
    if (t + dt >= t_end - 1e-9 * dt) {
      sizes.push_back(t_end - t);
      break;
    }
    sizes.push_back(dt);
    t += dt;
  }
  return sizes;
}

/// Advances `state` by dt_macro with stable forward-Euler substeps.
inline StateField step(const StateField &state, const VelocityModel &velocity, std::span<const double> source,
                       double dt_macro, const IntegratorSettings &settings = {}) {
  StateField out = state;
  const std::vector<double> sizes = substep_sizes(state.grid, velocity, state.time, dt_macro, settings);
  const double t_end = state.time + dt_macro;
  double t = state.time;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    out.time = t;
    const std::vector<double> rate = apply_rhs(out, velocity, source, t);
    const double dt = sizes[k];
    for (std::size_t i = 0; i < rate.size(); ++i) {
      out.values[i] += dt * rate[i];
      if (!std::isfinite(out.values[i]))
        throw NumericalFault("non-finite state after substep " + std::to_string(k) + " at t=" +
                             std::to_string(t) + "; refine the grid or reduce the step factors");
    }
    t = (k + 1 == sizes.size()) ? t_end : t + dt;
  }
  out.time = t_end;
  return out;
}

/// The substep grid of a run from t = 0 to t_end made of macro steps of
/// length macro_dt (the last macro step may be shorter). `times` holds every
/// node t_0 = 0 < t_1 < ... < t_N = t_end; step n covers [times[n], times[n+1]].
struct TimeSchedule {
  std::vector<double> times;
  std::vector<double> sizes;
  std::vector<std::size_t> macro_nodes; // indices into `times` of macro-step boundaries

  std::size_t steps() const { return sizes.size(); }

  /// Index of the node at time t, or npos if t is not a macro boundary.
  std::size_t node_at(double t) const {
    for (std::size_t idx : macro_nodes)
      if (std::abs(times[idx] - t) <= 1e-12 * std::max(1.0, std::abs(t))) return idx;
    return static_cast<std::size_t>(-1);
  }
};

inline double macro_time(double macro_dt, std::size_t k) { return static_cast<double>(k) * macro_dt; }

inline TimeSchedule build_schedule(const GridSpec &grid, const VelocityModel &velocity, double t_end,
                                   double macro_dt, const IntegratorSettings &settings = {}) {
  if (!(macro_dt > 0.0)) throw std::invalid_argument("schedule: macro_dt must be positive");
  if (t_end < 0.0) throw std::invalid_argument("schedule: t_end must be nonnegative");
  TimeSchedule s;
  s.times.push_back(0.0);
  s.macro_nodes.push_back(0);
  for (std::size_t k = 0;; ++k) {
    const double t0 = macro_time(macro_dt, k);
    if (t0 >= t_end - 1e-12 * std::max(1.0, t_end)) break;
    const double t1 = std::min(macro_time(macro_dt, k + 1), t_end);
    const std::vector<double> sizes = substep_sizes(grid, velocity, t0, t1 - t0, settings);
    double t = t0;
    for (std::size_t j = 0; j < sizes.size(); ++j) {
      t = (j + 1 == sizes.size()) ? t1 : t + sizes[j];
      s.sizes.push_back(sizes[j]);
      s.times.push_back(t);
    }
    s.macro_nodes.push_back(s.times.size() - 1);
  }
  return s;
}

/// Integrates from state.time (which must be 0) over the schedule, using the
/// same arithmetic as step(). Optionally records the state at every node.
inline StateField integrate(const StateField &initial, const VelocityModel &velocity,
                            std::span<const double> source, const TimeSchedule &schedule,
                            std::vector<std::vector<double>> *trajectory = nullptr) {
  StateField out = initial;
  if (trajectory) {
    trajectory->clear();
    trajectory->reserve(schedule.times.size());
    trajectory->push_back(out.values);
  }
  for (std::size_t k = 0; k < schedule.steps(); ++k) {
    const double t = schedule.times[k];
    out.time = t;
    const std::vector<double> rate = apply_rhs(out, velocity, source, t);
    const double dt = schedule.sizes[k];
    for (std::size_t i = 0; i < rate.size(); ++i) {
      out.values[i] += dt * rate[i];
      if (!std::isfinite(out.values[i]))
        throw NumericalFault("non-finite state after substep " + std::to_string(k));
    }
    if (trajectory) trajectory->push_back(out.values);
  }
  out.time = schedule.times.back();
  return out;
}

/// Bilinear interpolation weights: up to four (node index, weight) pairs.
struct ObservationStencil {
  std::array<std::size_t, 4> nodes{};
  std::array<double, 4> weights{};
};

inline ObservationStencil observation_stencil(const GridSpec &grid, Point location) {
  if (!grid.contains(location))
    throw std::out_of_range("observation location (" + std::to_string(location.x) + ", " +
                            std::to_string(location.y) + ") is outside the grid domain");
  const double h = grid.spacing();
  const int n = grid.n_points;
  auto cell = [&](double z, int &i0, double &frac) {
    double s = (z - grid.z_min) / h;
    s = std::clamp(s, 0.0, static_cast<double>(n - 1));
    i0 = std::min(static_cast<int>(std::floor(s)), n - 2);
    frac = s - i0;
  };
  int ix = 0, iy = 0;
  double fx = 0.0, fy = 0.0;
  cell(location.x, ix, fx);
  cell(location.y, iy, fy);
  ObservationStencil st;
  st.nodes = {grid.index(ix, iy), grid.index(ix + 1, iy), grid.index(ix, iy + 1), grid.index(ix + 1, iy + 1)};
  st.weights = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
  return st;
}

inline double observe(const StateField &state, Point location) {
  const ObservationStencil st = observation_stencil(state.grid, location);
  double value = 0.0;
  for (int k = 0; k < 4; ++k) value += st.weights[k] * state.values[st.nodes[k]];
  return value;
}

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Discrete spatial operator M(t) = A - B(t) of the convection-diffusion
/// right-hand side, with the Neumann reflection folded into boundary rows.
/// A is the Laplacian; B(t) = v_x(t) Bx + v_y(t) By where Bx, By are the
/// unit-velocity central-difference templates. All three share one sparsity
/// pattern so the fused products below run in a single pass.
class JacobianOperator {
public:
  JacobianOperator(const GridSpec &grid, const VelocityModel &velocity) : grid_(grid), velocity_(velocity) {
    const int n = grid.n_points;
    const double h = grid.spacing();
    const double inv_h2 = 1.0 / (h * h);
    const double inv_2h = 0.5 / h;
    using Triplet = Eigen::Triplet<double>;
    std::vector<Triplet> ta, tx, ty;
    const std::size_t reserve = grid.size() * 5;
    ta.reserve(reserve);
    tx.reserve(reserve);
    ty.reserve(reserve);
    auto add = [&](std::vector<Triplet> &t, std::size_t r, std::size_t c, double v) {
      t.emplace_back(static_cast<int>(r), static_cast<int>(c), v);
    };
    for (int iy = 0; iy < n; ++iy) {
      for (int ix = 0; ix < n; ++ix) {
        const std::size_t r = grid.index(ix, iy);
        const std::size_t xm = grid.index(ix > 0 ? ix - 1 : 1, iy);
        const std::size_t xp = grid.index(ix < n - 1 ? ix + 1 : n - 2, iy);
        const std::size_t ym = grid.index(ix, iy > 0 ? iy - 1 : 1);
        const std::size_t yp = grid.index(ix, iy < n - 1 ? iy + 1 : n - 2);
        // Every matrix gets the full 5-point pattern (explicit zeros kept).
        for (auto *t : {&ta, &tx, &ty}) add(*t, r, r, 0.0);
        for (std::size_t c : {xm, xp, ym, yp})
          for (auto *t : {&ta, &tx, &ty}) add(*t, r, c, 0.0);
        add(ta, r, r, -4.0 * inv_h2);
        for (std::size_t c : {xm, xp, ym, yp}) add(ta, r, c, inv_h2);
        add(tx, r, xp, inv_2h);
        add(tx, r, xm, -inv_2h);
        add(ty, r, yp, inv_2h);
        add(ty, r, ym, -inv_2h);
      }
    }
    const int dim = static_cast<int>(grid.size());
    laplacian_.resize(dim, dim);
    advection_x_.resize(dim, dim);
    advection_y_.resize(dim, dim);
    laplacian_.setFromTriplets(ta.begin(), ta.end());
    advection_x_.setFromTriplets(tx.begin(), tx.end());
    advection_y_.setFromTriplets(ty.begin(), ty.end());
    if (laplacian_.nonZeros() != advection_x_.nonZeros() || laplacian_.nonZeros() != advection_y_.nonZeros())
      throw std::logic_error("jacobian templates must share one sparsity pattern");
    laplacian_t_ = SparseMatrix(laplacian_.transpose());
    advection_x_t_ = SparseMatrix(advection_x_.transpose());
    advection_y_t_ = SparseMatrix(advection_y_.transpose());
  }

  const GridSpec &grid() const { return grid_; }
  const VelocityModel &velocity() const { return velocity_; }
  const SparseMatrix &laplacian() const { return laplacian_; }
  const SparseMatrix &advection_x() const { return advection_x_; }
  const SparseMatrix &advection_y() const { return advection_y_; }

  /// B(t) = v_x Bx + v_y By.
  SparseMatrix advection(double t) const {
    const Point v = velocity_.at(t);
    return SparseMatrix(v.x * advection_x_ + v.y * advection_y_);
  }

  /// A - B(t).
  SparseMatrix at(double t) const {
    const Point v = velocity_.at(t);
    return SparseMatrix(laplacian_ - v.x * advection_x_ - v.y * advection_y_);
  }

  /// out = (A - B(t)) x
  void multiply(double t, std::span<const double> x, std::span<double> out) const {
    fused(laplacian_, advection_x_, advection_y_, t, x, out);
  }

  /// out = (A - B(t))^T x
  void multiply_transpose(double t, std::span<const double> x, std::span<double> out) const {
    fused(laplacian_t_, advection_x_t_, advection_y_t_, t, x, out);
  }

private:
  void fused(const SparseMatrix &a, const SparseMatrix &bx, const SparseMatrix &by, double t,
             std::span<const double> x, std::span<double> out) const {
    const Point v = velocity_.at(t);
    const auto *outer = a.outerIndexPtr();
    const auto *inner = a.innerIndexPtr();
    const double *va = a.valuePtr();
    const double *vx = bx.valuePtr();
    const double *vy = by.valuePtr();
    const int rows = static_cast<int>(a.rows());
    for (int r = 0; r < rows; ++r) {
      double acc = 0.0;
      for (int k = outer[r]; k < outer[r + 1]; ++k) acc += (va[k] - v.x * vx[k] - v.y * vy[k]) * x[inner[k]];
      out[r] = acc;
    }
  }

  GridSpec grid_;
  VelocityModel velocity_;
  SparseMatrix laplacian_, advection_x_, advection_y_;
  SparseMatrix laplacian_t_, advection_x_t_, advection_y_t_;
};

inline SparseMatrix assemble_jacobian(const GridSpec &grid, const VelocityModel &velocity, double t) {
  return JacobianOperator(grid, velocity).at(t);
}

} // namespace activebed

#endif // ACTIVEBED_GRID_PDE_HPP
