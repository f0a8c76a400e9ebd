#ifndef ACTIVEBED_BAYES_GRID_HPP
#define ACTIVEBED_BAYES_GRID_HPP

// Grid-discretized Bayesian inference over the source location.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "activebed/common.hpp"

namespace activebed {

/// A spatiotemporal measurement coordinate.
struct Design {
  double x = 0.5;
  double y = 0.5;
  double t = 0.0;

  Point location() const { return {x, y}; }
};

inline bool operator==(const Design &a, const Design &b) { return a.x == b.x && a.y == b.y && a.t == b.t; }

enum class Provenance { TrueSystem, ModelPredicted };

struct Measurement {
  Design design;
  double value = 0.0;
  Provenance provenance = Provenance::TrueSystem;
};

/// Additive Gaussian measurement noise with covariance sigma^2 I.
struct NoiseModel {
  double sigma = 0.05;

  double log_density(double residual) const {
    return -0.5 * std::log(2.0 * std::numbers::pi * sigma * sigma) - 0.5 * residual * residual / (sigma * sigma);
  }
  double density(double residual) const { return std::exp(log_density(residual)); }
};

struct ParamGrid {
  std::vector<double> xs;
  std::vector<double> ys;

  static ParamGrid uniform(double lo, double hi, int n) {
    if (n < 2 || !(hi > lo)) throw ConfigError("parameter grid needs n >= 2 and hi > lo");
    ParamGrid g;
    for (int i = 0; i < n; ++i) {
      const double v = i == n - 1 ? hi : lo + (hi - lo) * i / (n - 1);
      g.xs.push_back(v);
      g.ys.push_back(v);
    }
    return g;
  }

  std::size_t size() const { return xs.size() * ys.size(); }
  /// Node k = iy * nx + ix.
  Point node(std::size_t k) const { return {xs[k % xs.size()], ys[k / xs.size()]}; }

  void validate() const {
    auto increasing = [](const std::vector<double> &a) {
      return a.size() >= 2 && std::adjacent_find(a.begin(), a.end(), std::greater_equal<>()) == a.end();
    };
    if (!increasing(xs) || !increasing(ys))
      throw ConfigError("parameter grid axes must be strictly increasing with at least 2 nodes");
  }
};

struct ParamPosterior {
  ParamGrid grid;
  std::vector<double> mass;

  static ParamPosterior uniform(const ParamGrid &grid) {
    grid.validate();
    return {grid, std::vector<double>(grid.size(), 1.0 / static_cast<double>(grid.size()))};
  }

  static ParamPosterior point_mass(const ParamGrid &grid, std::size_t node) {
    ParamPosterior p{grid, std::vector<double>(grid.size(), 0.0)};
    p.mass.at(node) = 1.0;
    return p;
  }
};

/// Model predictions u(d; theta) for a set of designs at every parameter node.
class PredictionTable {
public:
  PredictionTable() = default;
  PredictionTable(std::vector<Design> designs, std::vector<std::vector<double>> values)
      : designs_(std::move(designs)), values_(std::move(values)) {
    if (designs_.size() != values_.size()) throw std::invalid_argument("prediction table shape mismatch");
  }

  std::size_t size() const { return designs_.size(); }
  const std::vector<Design> &designs() const { return designs_; }

  std::size_t find(const Design &d) const {
    for (std::size_t i = 0; i < designs_.size(); ++i)
      if (designs_[i] == d) return i;
    throw std::out_of_range("no cached predictions for design (" + std::to_string(d.x) + ", " +
                            std::to_string(d.y) + ", " + std::to_string(d.t) + ")");
  }

  const std::vector<double> &at(std::size_t design_index) const { return values_.at(design_index); }
  const std::vector<double> &at(const Design &d) const { return values_[find(d)]; }

private:
  std::vector<Design> designs_;
  std::vector<std::vector<double>> values_;
};

/// Gaussian density of the measurement given the cached prediction at `node`.
inline double likelihood(const Measurement &y, std::size_t node, const PredictionTable &cache,
                         const NoiseModel &noise) {
  const std::vector<double> &pred = cache.at(y.design);
  if (node >= pred.size()) throw std::out_of_range("prediction cache has no entry for node " + std::to_string(node));
  return noise.density(y.value - pred[node]);
}

struct UpdateResult {
  ParamPosterior posterior;
  double log_evidence = 0.0;
};

/// Multiplies prior masses by exp(log_likelihood) and renormalizes in log
/// space. Returns the log evidence; `posterior` receives the new masses.
inline double posterior_masses(std::span<const double> prior, std::span<const double> log_likelihood,
                               std::vector<double> &posterior) {
  if (log_likelihood.size() != prior.size()) throw std::invalid_argument("likelihood size mismatch");
  const std::size_t n = prior.size();
  std::vector<double> logw(n, -std::numeric_limits<double>::infinity());
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    if (prior[i] > 0.0 && !std::isnan(log_likelihood[i])) logw[i] = std::log(prior[i]) + log_likelihood[i];
    top = std::max(top, logw[i]);
  }
  if (!std::isfinite(top))
    throw NumericalFault("likelihood underflow: measurement is inconsistent with every parameter node");
  posterior.assign(n, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    posterior[i] = std::exp(logw[i] - top);
    total += posterior[i];
  }
  for (double &m : posterior) m /= total;
  return top + std::log(total);
}

inline UpdateResult bayes_update_log(const ParamPosterior &prior, std::span<const double> log_likelihood) {
  UpdateResult out{ParamPosterior{prior.grid, {}}, 0.0};
  out.log_evidence = posterior_masses(prior.mass, log_likelihood, out.posterior.mass);
  return out;
}

inline std::vector<double> log_likelihoods(const Measurement &y, std::span<const double> predictions,
                                           const NoiseModel &noise) {
  std::vector<double> ll(predictions.size());
  for (std::size_t i = 0; i < predictions.size(); ++i) ll[i] = noise.log_density(y.value - predictions[i]);
  return ll;
}

inline UpdateResult bayes_update(const ParamPosterior &prior, const Measurement &y, const PredictionTable &cache,
                                 const NoiseModel &noise) {
  return bayes_update_log(prior, log_likelihoods(y, cache.at(y.design), noise));
}

/// sum p log(p / q), with 0 log(0/q) = 0.
inline double kld_masses(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("kld: distributions live on different grids");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0) throw NumericalFault("absolute continuity violated at node " + std::to_string(i));
    acc += p[i] * std::log(p[i] / q[i]);
  }
  // Rounding can leave a tiny negative value when p == q up to ulps.
  return std::max(acc, 0.0);
}

inline double kld_grid(const ParamPosterior &p, const ParamPosterior &q) { return kld_masses(p.mass, q.mass); }

/// Argmax node; ties go to the lowest linear index.
inline std::size_t map_estimate(const ParamPosterior &post) {
  return static_cast<std::size_t>(std::max_element(post.mass.begin(), post.mass.end()) - post.mass.begin());
}

/// Mean coordinate of the m highest-mass nodes (ties by lowest index).
inline Point top_m_mean(const ParamPosterior &post, std::size_t m) {
  if (m < 1 || m > post.mass.size()) throw std::invalid_argument("top_m_mean: m out of range");
  std::vector<std::size_t> order(post.mass.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      return post.mass[a] != post.mass[b] ? post.mass[a] > post.mass[b] : a < b;
                    });
  Point mean;
  for (std::size_t i = 0; i < m; ++i) {
    const Point p = post.grid.node(order[i]);
    mean.x += p.x;
    mean.y += p.y;
  }
  mean.x /= static_cast<double>(m);
  mean.y /= static_cast<double>(m);
  return mean;
}

} // namespace activebed

#endif // ACTIVEBED_BAYES_GRID_HPP
