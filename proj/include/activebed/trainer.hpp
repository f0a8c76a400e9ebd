#ifndef ACTIVEBED_TRAINER_HPP
#define ACTIVEBED_TRAINER_HPP

// Likelihood-based calibration of the discrepancy parameters (theta_s or the
// network weights) with the source location held at theta_G*.

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "activebed/adjoint.hpp"
#include "activebed/bayes_grid.hpp"
#include "activebed/forward_models.hpp"
#include "activebed/simulator.hpp"

namespace activebed {

enum class Optimizer { GradientAscent, Adam };

struct TrainConfig {
  int iterations = 150;
  double learning_rate = 1e-2;
  Optimizer optimizer = Optimizer::Adam;
  std::size_t top_m = 5;
  bool accumulate_history = false;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const {
    if (iterations < 1) throw ConfigError("train.iterations must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
    if (top_m < 1) throw ConfigError("train.top_m must be >= 1");
  }
};

/// The model with its physics and network inputs placed at theta_G*.
inline SourceTerm place(const SourceTerm &model, Point theta_star) {
  SourceTerm out = model.at_location(theta_star);
  out.net_location = theta_star;
  return out;
}

struct ObjectiveValue {
  double value = 0.0;
  std::vector<double> gradient;
};

/// Log-likelihood of `data` under the model (placed at theta_star, with the
/// given discrepancy parameters), from a fresh forward solve.
inline double objective(const Simulator &sim, const SourceTerm &model, std::span<const double> params,
                        Point theta_star, std::span<const Measurement> data, const NoiseModel &noise) {
  if (data.empty()) throw std::invalid_argument("objective needs at least one measurement");
  const SourceTerm source = place(model, theta_star).with_discrepancy(params);
  const std::vector<double> field = sample_source(sim.grid(), source);
  std::vector<double> times;
  for (const Measurement &m : data) times.push_back(m.design.t);
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  const std::vector<StateField> states = sim.solve_at(field, times);
  double total = 0.0;
  for (const Measurement &m : data) {
    const std::size_t k = static_cast<std::size_t>(std::find(times.begin(), times.end(), m.design.t) - times.begin());
    total += noise.log_density(m.value - observe(states[k], m.design.location()));
  }
  return total;
}

/// Objective and its adjoint gradient with respect to the discrepancy params.
inline ObjectiveValue gradient(const Simulator &sim, const SourceTerm &model, std::span<const double> params,
                               Point theta_star, std::span<const Measurement> data, const NoiseModel &noise) {
  if (data.empty()) throw std::invalid_argument("gradient needs at least one measurement");
  const SourceTerm source = place(model, theta_star).with_discrepancy(params);
  const std::vector<double> field = sample_source(sim.grid(), source);
  double t_end = 0.0;
  for (const Measurement &m : data) t_end = std::max(t_end, m.design.t);
  const TimeSchedule sched = sim.schedule(t_end);
  std::vector<std::vector<double>> traj;
  integrate(StateField::zeros(sim.grid()), sim.velocity(), field, sched, &traj);

  ObjectiveValue out;
  std::vector<AdjointSeed> seeds;
  for (const Measurement &m : data) {
    const std::size_t idx = sched.node_at(m.design.t);
    if (idx == static_cast<std::size_t>(-1)) throw std::out_of_range("measurement time is not on the solver schedule");
    const double u = observe(StateField{sim.grid(), traj[idx], sched.times[idx]}, m.design.location());
    const double r = m.value - u;
    out.value += noise.log_density(r);
    seeds.push_back({m.design.t, m.design.location(), r / (noise.sigma * noise.sigma)});
  }
  const AdjointState adj = adjoint_solve(sim.jacobian(), sched, seeds);
  out.gradient.assign(source.discrepancy_size(), 0.0);
  contract_source_gradient(sim.grid(), adj.integrated, source, out.gradient);
  return out;
}

/// Objective over a fixed data set using cached observation sensitivities.
/// Equivalent to objective()/gradient() since the Jacobian of the linear PDE
/// does not depend on the parameters; each evaluation is one sweep over nodes.
class CalibrationProblem {
public:
  CalibrationProblem(const Simulator &sim, SourceTerm model, Point theta_star, std::vector<Measurement> data,
                     NoiseModel noise)
      : sim_(sim), model_(place(model, theta_star)), data_(std::move(data)), noise_(noise) {
    if (data_.empty()) throw std::invalid_argument("calibration needs at least one measurement");
    for (const Measurement &m : data_) weights_.push_back(sim.sensitivity(m.design));
  }

  std::size_t dimension() const { return model_.discrepancy_size(); }
  const SourceTerm &model() const { return model_; }

  /// Model predictions at every measurement for the given parameters.
  std::vector<double> predictions(std::span<const double> params) const {
    const SourceTerm source = model_.with_discrepancy(params);
    std::vector<double> u(data_.size(), 0.0);
    for (std::size_t k = 0; k < data_.size(); ++k) u[k] = contract_source(sim_.grid(), *weights_[k], source);
    return u;
  }

  ObjectiveValue evaluate(std::span<const double> params) const {
    const SourceTerm source = model_.with_discrepancy(params);
    const GridSpec &g = sim_.grid();
    const std::size_t m = data_.size();
    const std::size_t dim = dimension();
    std::vector<double> u(m, 0.0), local(dim);
    std::vector<std::vector<double>> du(m, std::vector<double>(dim, 0.0));
    for (int iy = 0; iy < g.n_points; ++iy)
      for (int ix = 0; ix < g.n_points; ++ix) {
        const std::size_t i = g.index(ix, iy);
        const double s = source.discrepancy_gradient(g.node(ix, iy), local);
        for (std::size_t k = 0; k < m; ++k) {
          const double w = (*weights_[k])[i];
          if (w == 0.0) continue;
          u[k] += w * s;
          for (std::size_t j = 0; j < dim; ++j) du[k][j] += w * local[j];
        }
      }
    ObjectiveValue out;
    out.gradient.assign(dim, 0.0);
    const double inv_var = 1.0 / (noise_.sigma * noise_.sigma);
    for (std::size_t k = 0; k < m; ++k) {
      const double r = data_[k].value - u[k];
      out.value += noise_.log_density(r);
      for (std::size_t j = 0; j < dim; ++j) out.gradient[j] += r * inv_var * du[k][j];
    }
    return out;
  }

private:
  const Simulator &sim_;
  SourceTerm model_;
  std::vector<Measurement> data_;
  NoiseModel noise_;
  std::vector<std::shared_ptr<const std::vector<double>>> weights_;
};

struct TrainResult {
  std::vector<double> params;
  std::vector<double> objective_trace;
  std::vector<double> param_norms;
  std::vector<std::vector<double>> param_trace; // only filled for low-dimensional parameters
  bool aborted = false;
};

inline double l2_norm(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

/// Runs cfg.iterations ascent steps on `evaluate` (returning value and
/// gradient). The trace holds the objective at the parameters each step
/// started from. Stops early, keeping the last finite parameters, if the
/// objective or gradient turns non-finite.
template <typename Evaluate>
TrainResult maximize(Evaluate &&evaluate, std::vector<double> params, const TrainConfig &cfg) {
  cfg.validate();
  TrainResult out;
  const std::size_t dim = params.size();
  std::vector<double> m(dim, 0.0), v(dim, 0.0);
  std::vector<double> previous = params;
  for (int it = 0; it < cfg.iterations; ++it) {
    const ObjectiveValue ov = evaluate(std::span<const double>(params));
    bool finite = std::isfinite(ov.value);
    for (double g : ov.gradient) finite = finite && std::isfinite(g);
    if (!finite) {
      params = previous;
      out.aborted = true;
      break;
    }
    out.objective_trace.push_back(ov.value);
    out.param_norms.push_back(l2_norm(params));
    if (dim <= 4) out.param_trace.push_back(params);
    previous = params;
    if (cfg.optimizer == Optimizer::GradientAscent) {
      for (std::size_t j = 0; j < dim; ++j) params[j] += cfg.learning_rate * ov.gradient[j];
    } else {
      const double c1 = 1.0 - std::pow(cfg.beta1, it + 1);
      const double c2 = 1.0 - std::pow(cfg.beta2, it + 1);
      for (std::size_t j = 0; j < dim; ++j) {
        const double g = ov.gradient[j];
        m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
        v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
        params[j] += cfg.learning_rate * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg.epsilon);
      }
    }
  }
  out.params = std::move(params);
  return out;
}

inline TrainResult train_stage(const CalibrationProblem &problem, std::vector<double> params, const TrainConfig &cfg) {
  return maximize([&](std::span<const double> p) { return problem.evaluate(p); }, std::move(params), cfg);
}

} // namespace activebed

#endif // ACTIVEBED_TRAINER_HPP
