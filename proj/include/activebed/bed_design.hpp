#ifndef ACTIVEBED_BED_DESIGN_HPP
#define ACTIVEBED_BED_DESIGN_HPP

// Greedy stage-wise design selection.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "activebed/bayes_grid.hpp"
#include "activebed/common.hpp"

namespace activebed {

struct DesignConstraint {
  double max_move = 0.2;
  double stage_dt = 0.05;
  Point initial{0.5, 0.5};
  double lower = 0.0;
  double upper = 1.0;

  void validate() const {
    if (!(max_move > 0.0)) throw ConfigError("constraint.max_move must be > 0");
    if (!(stage_dt > 0.0)) throw ConfigError("constraint.stage_dt must be > 0");
  }
};

/// n x n lattice of offsets over [-max_move, max_move]^2 around `prev`,
/// clipped to the design box and deduplicated, one stage later in time.
inline std::vector<Design> candidates(const Design &prev, const DesignConstraint &c, int n_per_axis,
                                      double next_time) {
  if (n_per_axis < 1) throw std::invalid_argument("candidates: n_per_axis must be >= 1");
  std::vector<double> offsets;
  for (int i = 0; i < n_per_axis; ++i)
    offsets.push_back(n_per_axis == 1 ? 0.0 : -c.max_move + 2.0 * c.max_move * i / (n_per_axis - 1));
  auto clip = [&](double v) {
    v = std::clamp(v, c.lower, c.upper);
    return std::round(v * 1e12) / 1e12; // merge values that differ only by rounding
  };
  std::vector<Design> out;
  for (double oy : offsets)
    for (double ox : offsets) {
      const Design d{clip(prev.x + ox), clip(prev.y + oy), next_time};
      if (std::find(out.begin(), out.end(), d) == out.end()) out.push_back(d);
    }
  return out;
}

inline std::vector<Design> candidates(const Design &prev, const DesignConstraint &c, int n_per_axis) {
  return candidates(prev, c, n_per_axis, prev.t + c.stage_dt);
}

struct InformationGain {
  double nats = 0.0;
  Measurement measurement;
  ParamPosterior posterior;
};

using Measurer = std::function<Measurement(const Design &)>;

/// KL(posterior || prior) after measuring the true system at d.
inline InformationGain realized_ig(const ParamPosterior &prior, const Design &d, const Measurer &measure,
                                   const PredictionTable &cache, const NoiseModel &noise) {
  Measurement y = measure(d);
  UpdateResult upd = bayes_update(prior, y, cache, noise);
  const double ig = kld_grid(upd.posterior, prior);
  return {ig, std::move(y), std::move(upd.posterior)};
}

/// Monte Carlo expected information gain: theta ~ prior, y = u(d; theta) + eta.
inline double expected_ig(const ParamPosterior &prior, const Design &d, const PredictionTable &cache,
                          const NoiseModel &noise, int n_samples, std::uint64_t seed) {
  if (n_samples < 1) throw std::invalid_argument("expected_ig: n_samples must be >= 1");
  const std::vector<double> &pred = cache.at(d);
  std::mt19937_64 rng(seed);
  std::discrete_distribution<std::size_t> draw_theta(prior.mass.begin(), prior.mass.end());
  std::normal_distribution<double> eta(0.0, noise.sigma);
  double acc = 0.0;
  for (int s = 0; s < n_samples; ++s) {
    const std::size_t node = draw_theta(rng);
    const Measurement y{d, pred[node] + eta(rng), Provenance::ModelPredicted};
    acc += kld_grid(bayes_update(prior, y, cache, noise).posterior, prior);
  }
  return acc / n_samples;
}

enum class SelectionMode { Measured, Predictive };

struct ScoredCandidate {
  Design design;
  double score = 0.0;
  std::optional<Measurement> measurement;
};

struct Selection {
  std::size_t chosen = 0;
  std::vector<ScoredCandidate> table;

  const ScoredCandidate &winner() const { return table.at(chosen); }
};

/// Argmax of the scores; ties go to the smallest index.
inline std::size_t argmax_score(const std::vector<ScoredCandidate> &table) {
  if (table.empty()) throw std::invalid_argument("select_design: empty candidate list");
  std::size_t best = 0;
  for (std::size_t i = 1; i < table.size(); ++i)
    if (table[i].score > table[best].score) best = i;
  return best;
}

/// Scores every candidate and picks the best. In measured mode each candidate
/// is measured on the true system; in predictive mode it is scored by EIG
/// with a per-candidate seed derived from `seed`.
inline Selection select_design(const ParamPosterior &prior, const std::vector<Design> &cands, SelectionMode mode,
                               const PredictionTable &cache, const NoiseModel &noise, const Measurer &measure,
                               int eig_samples, std::uint64_t seed, unsigned workers = 1) {
  if (cands.empty()) throw std::invalid_argument("select_design: empty candidate list");
  Selection sel;
  sel.table.resize(cands.size());
  parallel_for(cands.size(), workers, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      ScoredCandidate &sc = sel.table[i];
      sc.design = cands[i];
      if (mode == SelectionMode::Measured) {
        InformationGain ig = realized_ig(prior, cands[i], measure, cache, noise);
        sc.score = ig.nats;
        sc.measurement = std::move(ig.measurement);
      } else {
        sc.score = expected_ig(prior, cands[i], cache, noise, eig_samples, derive_seed(seed, "eig", i));
      }
    }
  });
  sel.chosen = argmax_score(sel.table);
  return sel;
}

} // namespace activebed

#endif // ACTIVEBED_BED_DESIGN_HPP
