#ifndef ACTIVEBED_SIMULATOR_HPP
#define ACTIVEBED_SIMULATOR_HPP

// Bundles a PDE configuration with the schedules, Jacobian and observation
// sensitivities derived from it.
//
// The solution is linear in a time-independent source and starts from zero,
// so an observation of the modeled field is a fixed linear functional of the
// source: u(d) = sum_z w_d(z) S(z), where w_d is the time-integrated discrete
// adjoint of the observation at d. One backward solve per design therefore
// gives the model prediction at d for every source parameter, exactly as the
// forward solver would (up to rounding).

#include <algorithm>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <tuple>
#include <vector>

#include "activebed/adjoint.hpp"
#include "activebed/bayes_grid.hpp"
#include "activebed/forward_models.hpp"
#include "activebed/grid_pde.hpp"

namespace activebed {

class Simulator {
public:
  Simulator(GridSpec grid, VelocityModel velocity, double macro_dt, IntegratorSettings settings = {})
      : grid_(grid), velocity_(velocity), macro_dt_(macro_dt), settings_(settings),
        jacobian_(std::make_shared<JacobianOperator>(grid, velocity)) {
    if (!(macro_dt > 0.0)) throw ConfigError("macro time step must be positive");
  }

  const GridSpec &grid() const { return grid_; }
  const VelocityModel &velocity() const { return velocity_; }
  const IntegratorSettings &settings() const { return settings_; }
  double macro_dt() const { return macro_dt_; }
  const JacobianOperator &jacobian() const { return *jacobian_; }

  TimeSchedule schedule(double t_end) const { return build_schedule(grid_, velocity_, t_end, macro_dt_, settings_); }

  /// Solves from a zero field at t = 0 up to t_end.
  StateField solve(std::span<const double> source_field, double t_end) const {
    return integrate(StateField::zeros(grid_), velocity_, source_field, schedule(t_end));
  }

  StateField solve(const SourceTerm &source, double t_end) const {
    const std::vector<double> field = sample_source(grid_, source);
    return solve(field, t_end);
  }

  /// Fields at each requested time (ascending) from one forward pass.
  std::vector<StateField> solve_at(std::span<const double> source_field, std::span<const double> times) const {
    std::vector<StateField> out;
    if (times.empty()) return out;
    const TimeSchedule sched = schedule(times.back());
    std::vector<std::vector<double>> traj;
    integrate(StateField::zeros(grid_), velocity_, source_field, sched, &traj);
    for (double t : times) {
      const std::size_t idx = sched.node_at(t);
      if (idx == static_cast<std::size_t>(-1)) throw std::out_of_range("requested time is not a macro-step boundary");
      out.push_back(StateField{grid_, traj[idx], sched.times[idx]});
    }
    return out;
  }

  /// w_d with u(d) = sum_z w_d(z) S(z) for a zero initial field. Cached.
  std::shared_ptr<const std::vector<double>> sensitivity(const Design &d) const {
    const auto key = std::make_tuple(d.t, d.x, d.y);
    {
      std::lock_guard lock(mutex_);
      if (auto it = sensitivities_.find(key); it != sensitivities_.end()) return it->second;
    }
    std::vector<double> w(grid_.size(), 0.0);
    if (d.t > 0.0) {
      const AdjointSeed seed{d.t, d.location(), 1.0};
      w = adjoint_solve(*jacobian_, schedule(d.t), std::span(&seed, 1)).integrated;
    } else {
      (void)observation_stencil(grid_, d.location());
    }
    auto ptr = std::make_shared<const std::vector<double>>(std::move(w));
    std::lock_guard lock(mutex_);
    return sensitivities_.emplace(key, ptr).first->second;
  }

  double predict(const Design &d, const SourceTerm &source) const {
    return contract_source(grid_, *sensitivity(d), source);
  }

private:
  GridSpec grid_;
  VelocityModel velocity_;
  double macro_dt_;
  IntegratorSettings settings_;
  std::shared_ptr<JacobianOperator> jacobian_;
  mutable std::mutex mutex_;
  mutable std::map<std::tuple<double, double, double>, std::shared_ptr<const std::vector<double>>> sensitivities_;
};

/// Predictions of `model` at every design for every location node of `params`.
/// The physics part of the source moves with the node; the network correction
/// keeps its own input location (`model.net_location`).
inline PredictionTable predict_over_grid(const Simulator &sim, const std::vector<Design> &designs,
                                         const ParamGrid &params, const SourceTerm &model, unsigned workers = 0) {
  const GridSpec &g = sim.grid();
  const std::size_t n_designs = designs.size();
  std::vector<std::shared_ptr<const std::vector<double>>> w(n_designs);
  parallel_for(n_designs, workers, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) w[i] = sim.sensitivity(designs[i]);
  });

  // Network correction does not depend on the node.
  std::vector<double> offset(n_designs, 0.0);
  if (model.kind == SourceKind::NetworkAugmented) {
    std::vector<double> corr(g.size());
    for (int iy = 0; iy < g.n_points; ++iy)
      for (int ix = 0; ix < g.n_points; ++ix) corr[g.index(ix, iy)] = model.correction(g.node(ix, iy));
    for (std::size_t i = 0; i < n_designs; ++i)
      offset[i] = std::inner_product(corr.begin(), corr.end(), w[i]->begin(), 0.0);
  }

  std::vector<std::vector<double>> values(n_designs, std::vector<double>(params.size(), 0.0));
  const bool gaussian = model.kind == SourceKind::TrueExponential || model.kind == SourceKind::ParametricStrength;
  const int n = g.n_points;
  parallel_for(params.size(), workers, [&](std::size_t b, std::size_t e) {
    std::vector<double> field(g.size()), fx(n), fy(n);
    for (std::size_t k = b; k < e; ++k) {
      const SourceTerm at = model.at_location(params.node(k));
      if (gaussian) {
        // Separable: S = c * ex(ix) * ey(iy). Factors below 1e-300 are dropped
        // (they only contribute subnormal products).
        const SourceParams &p = at.params;
        const double h2 = p.theta_h * p.theta_h;
        const double c = p.theta_s / (2.0 * std::numbers::pi * h2);
        int lo = n, hi = -1;
        for (int i = 0; i < n; ++i) {
          const double z = g.coord(i);
          fx[i] = std::exp(-(p.theta_x - z) * (p.theta_x - z) / (2.0 * h2));
          fy[i] = std::exp(-(p.theta_y - z) * (p.theta_y - z) / (2.0 * h2));
          if (fx[i] < 1e-300) fx[i] = 0.0;
          if (fy[i] < 1e-300) fy[i] = 0.0;
          if (fx[i] != 0.0) lo = std::min(lo, i), hi = std::max(hi, i);
        }
        for (std::size_t i = 0; i < n_designs; ++i) {
          double acc = 0.0;
          for (int iy = 0; iy < n && lo <= hi; ++iy) {
            if (fy[iy] == 0.0) continue;
            const double *row = w[i]->data() + g.index(0, iy);
            double r = 0.0;
            for (int ix = lo; ix <= hi; ++ix) r += row[ix] * fx[ix];
            acc += fy[iy] * r;
          }
          values[i][k] = c * acc + offset[i];
        }
      } else {
        for (int iy = 0; iy < n; ++iy)
          for (int ix = 0; ix < n; ++ix) field[g.index(ix, iy)] = at.physics(g.node(ix, iy));
        for (std::size_t i = 0; i < n_designs; ++i)
          values[i][k] = std::inner_product(field.begin(), field.end(), w[i]->begin(), 0.0) + offset[i];
      }
    }
  });
  return PredictionTable(designs, std::move(values));
}

/// Reference path: one forward solve per node. Only practical on coarse grids.
inline PredictionTable predict_over_grid_forward(const Simulator &sim, const std::vector<Design> &designs,
                                                 const ParamGrid &params, const SourceTerm &model) {
  std::vector<double> times;
  for (const Design &d : designs) times.push_back(d.t);
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  std::vector<std::vector<double>> values(designs.size(), std::vector<double>(params.size()));
  for (std::size_t k = 0; k < params.size(); ++k) {
    const std::vector<double> field = sample_source(sim.grid(), model.at_location(params.node(k)));
    const std::vector<StateField> states = sim.solve_at(field, times);
    for (std::size_t i = 0; i < designs.size(); ++i) {
      const auto it = std::find(times.begin(), times.end(), designs[i].t);
      values[i][k] = observe(states[static_cast<std::size_t>(it - times.begin())], designs[i].location());
    }
  }
  return PredictionTable(designs, std::move(values));
}

} // namespace activebed

#endif // ACTIVEBED_SIMULATOR_HPP
