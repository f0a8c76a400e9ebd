#ifndef ACTIVEBED_GRADCHECK_HPP
#define ACTIVEBED_GRADCHECK_HPP

// Adjoint gradient vs central finite differences of the discrete objective on
// a coarse configuration.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "activebed/campaign.hpp"

namespace activebed {

struct GradientCheck {
  int draws = 0;
  std::size_t dimension = 0;
  double max_relative_error = 0.0;
  std::vector<double> worst_adjoint; // gradients of the worst draw
  std::vector<double> worst_fd;
};

/// Relative error of one component, with a floor on the denominator so that
/// components many orders below the gradient norm are compared in absolute
/// terms against that floor.
inline double component_error(double adjoint, double fd, double scale) {
  return std::abs(adjoint - fd) / std::max({std::abs(fd), 1e-6 * scale, 1e-12});
}

struct GradCheckSetup {
  int n_points = 21;
  double measure_time = 0.1;
  Design design{0.5, 0.5, 0.1};
  double theta_h = 0.3;  // wide enough to be resolved by the coarse mesh
  double fd_step = 1e-4; // theta_s; the network uses fd_step / 10
};

/// Runs `draws` random parameter vectors for the scenario's discrepancy model
/// (theta_s, or the 37 network weights) against one noisy measurement.
inline GradientCheck check_gradients(Scenario scenario, int draws, std::uint64_t seed, GradCheckSetup setup = {}) {
  CampaignConfig cfg = default_config(scenario);
  cfg.grid.n_points = setup.n_points;
  cfg.seed = seed;
  cfg.model.theta_h = setup.theta_h;
  cfg.true_source.theta_h = setup.theta_h;
  const Simulator sim = make_simulator(cfg);
  const TrueSystem truth(sim, cfg.true_source, cfg.noise, seed);
  Design d = setup.design;
  d.t = setup.measure_time;
  const std::vector<Measurement> data{truth.measure(d, 1)};
  const Point theta_star = cfg.true_source.location();
  const SourceTerm model = initial_model(cfg);

  std::mt19937_64 rng(derive_seed(seed, "gradcheck"));
  std::uniform_real_distribution<double> strength(1.0, 3.0);
  std::uniform_real_distribution<double> weight(-0.3, 0.3);
  GradientCheck out;
  out.draws = draws;
  out.dimension = model.discrepancy_size();
  const double h = scenario == Scenario::Parametric ? setup.fd_step : setup.fd_step / 10.0;
  for (int k = 0; k < draws; ++k) {
    std::vector<double> p(out.dimension);
    if (scenario == Scenario::Parametric) p[0] = strength(rng);
    else
      for (double &v : p) v = weight(rng);
    const ObjectiveValue adj = gradient(sim, model, p, theta_star, data, cfg.noise);
    std::vector<double> fd(out.dimension);
    double scale = 0.0;
    for (std::size_t i = 0; i < out.dimension; ++i) {
      std::vector<double> up = p, down = p;
      up[i] += h;
      down[i] -= h;
      fd[i] = (objective(sim, model, up, theta_star, data, cfg.noise) -
               objective(sim, model, down, theta_star, data, cfg.noise)) /
              (2.0 * h);
      scale = std::max(scale, std::abs(fd[i]));
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < out.dimension; ++i) worst = std::max(worst, component_error(adj.gradient[i], fd[i], scale));
    if (worst >= out.max_relative_error) {
      out.max_relative_error = worst;
      out.worst_adjoint = adj.gradient;
      out.worst_fd = fd;
    }
  }
  return out;
}

} // namespace activebed

#endif // ACTIVEBED_GRADCHECK_HPP
