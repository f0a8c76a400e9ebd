#ifndef ACTIVEBED_CAMPAIGN_HPP
#define ACTIVEBED_CAMPAIGN_HPP

// Stage loop: select a design, measure, update the location posterior,
// estimate theta_G*, run the EKI indicator and (if accepted) retrain the
// discrepancy parameters.

#include <Eigen/Dense>

#include <array>
#include <chrono>
#include <functional>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "activebed/bayes_grid.hpp"
#include "activebed/bed_design.hpp"
#include "activebed/eki.hpp"
#include "activebed/forward_models.hpp"
#include "activebed/simulator.hpp"
#include "activebed/trainer.hpp"

namespace activebed {

enum class Scenario { Parametric, Structural };

struct ModelConfig {
  double theta_h = 0.05;
  double theta_s = 3.0;        // initial strength (parametric) or fixed strength (structural)
  double net_gain = 100.0;
  double net_init_range = 0.1;
};

struct CampaignConfig {
  Scenario scenario = Scenario::Parametric;
  int stages = 5;
  SelectionMode mode = SelectionMode::Measured;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  GridSpec grid;
  IntegratorSettings integrator;
  double velocity_coefficient = 20.0;
  double param_min = 0.0;
  double param_max = 1.0;
  int param_points = 51;
  NoiseModel noise;
  DesignConstraint constraint;
  int candidates_per_axis = 5;
  SourceParams true_source{0.45, 0.25, 0.05, 2.0};
  ModelConfig model;
  bool train_enabled = true;
  TrainConfig train;
  EkiConfig eki;
  int eig_samples = 64;
  bool refresh_posterior = true; // re-condition past data on the current discrepancy estimate
  int comparison_stage = 3;
  std::optional<std::array<double, 2>> metrics_window; // [lo, hi]^2 node window; whole grid when unset
  unsigned workers = 0;

  void validate() const {
    if (stages < 0) throw ConfigError("stages must be >= 0");
    if (grid.n_points < 3) throw ConfigError("grid.n_points must be >= 3");
    if (!(grid.z_max > grid.z_min)) throw ConfigError("grid.z_max must exceed grid.z_min");
    if (!(integrator.stability_factor > 0.0 && integrator.stability_factor <= 1.0) ||
        !(integrator.cfl_factor > 0.0 && integrator.cfl_factor <= 1.0))
      throw ConfigError("grid.stability_factor and grid.cfl_factor must lie in (0, 1]");
    if (!std::isfinite(velocity_coefficient)) throw ConfigError("velocity_coefficient must be finite");
    if (param_points < 2 || !(param_max > param_min)) throw ConfigError("param_grid needs n >= 2 and max > min");
    if (!(noise.sigma > 0.0)) throw ConfigError("noise_sigma must be > 0");
    constraint.validate();
    if (candidates_per_axis < 1) throw ConfigError("constraint.n_per_axis must be >= 1");
    if (!(true_source.theta_h > 0.0) || !(model.theta_h > 0.0)) throw ConfigError("theta_h must be > 0");
    if (!(model.net_gain > 0.0)) throw ConfigError("model.net_gain must be > 0");
    if (!(model.net_init_range >= 0.0)) throw ConfigError("model.net_init_range must be >= 0");
    train.validate();
    if (train.top_m > static_cast<std::size_t>(param_points) * static_cast<std::size_t>(param_points))
      throw ConfigError("train.top_m exceeds the parameter grid size");
    eki.validate();
    if (eig_samples < 1) throw ConfigError("eig_samples must be >= 1");
    if (metrics_window && !((*metrics_window)[1] > (*metrics_window)[0])) throw ConfigError("metrics window is empty");
    auto inside = [&](double v) { return v >= grid.z_min && v <= grid.z_max; };
    if (!inside(constraint.lower) || !inside(constraint.upper) || !inside(param_min) || !inside(param_max))
      throw ConfigError("design box and parameter grid must lie inside the PDE domain");
  }
};

/// Paper presets: parametric (v = 20t, source at (0.45, 0.25), theta_s from 3)
/// and structural (v = 50t, source at (0.25, 0.25), rational source + net).
inline CampaignConfig default_config(Scenario scenario) {
  CampaignConfig cfg;
  cfg.scenario = scenario;
  if (scenario == Scenario::Structural) {
    cfg.velocity_coefficient = 50.0;
    cfg.true_source = {0.25, 0.25, 0.05, 2.0};
    cfg.model.theta_s = 2.0;
    cfg.train.learning_rate = 5e-3;
  }
  return cfg;
}

/// Initial model source (location is replaced by each node / estimate).
inline SourceTerm initial_model(const CampaignConfig &cfg) {
  const SourceParams p{0.5, 0.5, cfg.model.theta_h, cfg.model.theta_s};
  if (cfg.scenario == Scenario::Parametric) return SourceTerm::parametric(p);
  return SourceTerm::augmented(p, DiscrepancyNet::random(derive_seed(cfg.seed, "net-init"), cfg.model.net_init_range),
                               cfg.model.net_gain, {0.5, 0.5});
}

inline Simulator make_simulator(const CampaignConfig &cfg) {
  return Simulator(GridSpec::make(cfg.grid.z_min, cfg.grid.z_max, cfg.grid.n_points),
                   VelocityModel{cfg.velocity_coefficient}, cfg.constraint.stage_dt, cfg.integrator);
}

/// Noise stream for a measurement: keyed by stage and design location so
/// the same design at the same stage always sees the same noise draw.
inline std::uint64_t noise_seed(std::uint64_t master, int stage, const Design &d) {
  const auto q = [](double v) { return static_cast<std::uint64_t>(std::llround(v * 1e6)) & 0xffffffffULL; };
  return derive_seed(master, "noise", static_cast<std::uint64_t>(stage), (q(d.x) << 32) | q(d.y));
}

/// The "real" system: exponential source at the true parameters. Fields at
/// stage times are computed once by a forward solve and cached.
class TrueSystem {
public:
  TrueSystem(const Simulator &sim, SourceParams truth, NoiseModel noise, std::uint64_t master_seed)
      : sim_(sim), truth_(truth), noise_(noise), master_(master_seed),
        field_(sample_source(sim.grid(), SourceTerm::true_exponential(truth))) {}

  const SourceParams &truth() const { return truth_; }

  /// Noise-free field at time t (a macro-step boundary).
  std::shared_ptr<const StateField> field(double t) const {
    std::lock_guard lock(mutex_);
    if (auto it = fields_.find(t); it != fields_.end()) return it->second;
    const double t_stored = fields_.empty() ? 0.0 : fields_.rbegin()->first;
    if (t > t_stored) {
      // Extend the cache to every macro boundary up to t in one pass.
      const TimeSchedule sched = sim_.schedule(t);
      std::vector<double> times;
      for (std::size_t k : sched.macro_nodes) times.push_back(sched.times[k]);
      const std::vector<StateField> states = sim_.solve_at(field_, times);
      for (std::size_t k = 0; k < times.size(); ++k)
        fields_.try_emplace(times[k], std::make_shared<const StateField>(states[k]));
    }
    auto it = fields_.find(t);
    if (it == fields_.end()) {
      // Not a macro boundary: solve directly.
      it = fields_.emplace(t, std::make_shared<const StateField>(sim_.solve(field_, t))).first;
    }
    return it->second;
  }

  double clean(const Design &d) const {
    if (d.t <= 0.0) {
      (void)observation_stencil(sim_.grid(), d.location());
      return 0.0;
    }
    return observe(*field(d.t), d.location());
  }

  Measurement measure(const Design &d, std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> eta(0.0, noise_.sigma);
    return {d, clean(d) + eta(rng), Provenance::TrueSystem};
  }

  Measurement measure(const Design &d, int stage) const { return measure(d, noise_seed(master_, stage, d)); }

private:
  const Simulator &sim_;
  SourceParams truth_;
  NoiseModel noise_;
  std::uint64_t master_;
  std::vector<double> field_;
  mutable std::mutex mutex_;
  mutable std::map<double, std::shared_ptr<const StateField>> fields_;
};

struct FieldMetrics {
  double mse = 0.0;
  double re = 0.0;
};

/// MSE = mean (u - u_true)^2, RE = sum |u - u_true| / sum |u_true|.
inline FieldMetrics field_metrics(std::span<const double> u, std::span<const double> u_true) {
  if (u.size() != u_true.size() || u.empty()) throw std::invalid_argument("field_metrics: fields differ in size");
  double sq = 0.0, abs_err = 0.0, abs_true = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double e = u[i] - u_true[i];
    sq += e * e;
    abs_err += std::abs(e);
    abs_true += std::abs(u_true[i]);
  }
  if (abs_true == 0.0) throw NumericalFault("undefined relative error: true field is identically zero");
  return {sq / static_cast<double>(u.size()), abs_err / abs_true};
}

/// Values of a field on the grid nodes inside the square window.
inline std::vector<double> window_values(const StateField &f, double lo, double hi) {
  std::vector<double> out;
  const GridSpec &g = f.grid;
  const double tol = 1e-9 * g.spacing();
  for (int iy = 0; iy < g.n_points; ++iy)
    for (int ix = 0; ix < g.n_points; ++ix) {
      const Point z = g.node(ix, iy);
      if (z.x >= lo - tol && z.x <= hi + tol && z.y >= lo - tol && z.y <= hi + tol)
        out.push_back(f.values[g.index(ix, iy)]);
    }
  return out;
}

struct IndicatorRecord {
  std::vector<double> kld;            // winner's trajectory
  std::vector<double> candidate_final; // final KLD of every candidate (score-table order)
  std::vector<std::vector<double>> candidate_kld;
  bool accepted = false;
};

struct StageRecord {
  int stage = 0;
  Selection selection;
  Measurement measurement;
  ParamPosterior posterior;
  Point theta_star;
  Point map;
  std::optional<IndicatorRecord> indicator;
  bool trained = false;
  TrainResult training;
  std::vector<double> params_after; // discrepancy parameters at the end of the stage
  double seconds = 0.0;
};

/// Campaign state carried between stages.
struct CampaignState {
  ParamPosterior posterior;
  std::vector<double> posterior_params; // discrepancy parameters `posterior` is conditioned on
  Design last;
  Point theta_star{0.5, 0.5};
  std::vector<double> params;
  std::vector<Measurement> history;
  std::vector<StageRecord> records;
};

inline CampaignState initial_state(const CampaignConfig &cfg) {
  CampaignState s;
  s.posterior = ParamPosterior::uniform(ParamGrid::uniform(cfg.param_min, cfg.param_max, cfg.param_points));
  s.last = Design{cfg.constraint.initial.x, cfg.constraint.initial.y, 0.0};
  s.params = initial_model(cfg).discrepancy_params();
  s.posterior_params = s.params;
  return s;
}

/// Location posterior from a uniform prior given every past measurement,
/// with the likelihood of all of them under `model` (the current estimate).
inline ParamPosterior refreshed_posterior(const Simulator &sim, const ParamGrid &grid, const SourceTerm &model,
                                          const std::vector<Measurement> &history, const NoiseModel &noise,
                                          unsigned workers) {
  std::vector<Design> designs;
  for (const Measurement &m : history)
    if (std::find(designs.begin(), designs.end(), m.design) == designs.end()) designs.push_back(m.design);
  const PredictionTable table = predict_over_grid(sim, designs, grid, model, workers);
  ParamPosterior post = ParamPosterior::uniform(grid);
  for (const Measurement &m : history) post = bayes_update(post, m, table, noise).posterior;
  return post;
}

/// Prediction u(d; theta*, params) as a function of the discrepancy
/// parameters, for the EKI forward map. Uses the cached sensitivity of d.
class DiscrepancyForward {
public:
  DiscrepancyForward(const Simulator &sim, const SourceTerm &model, Point theta_star, const Design &d)
      : grid_(sim.grid()), model_(place(model, theta_star)), weights_(sim.sensitivity(d)) {
    SourceTerm physics_only = model_;
    if (model_.kind == SourceKind::ParametricStrength) physics_only.params.theta_s = 1.0;
    physics_only.kind = model_.kind == SourceKind::NetworkAugmented ? SourceKind::ModeledRational : physics_only.kind;
    base_ = contract_source(grid_, *weights_, physics_only);
  }

  double operator()(std::span<const double> params) const {
    switch (model_.kind) {
    case SourceKind::ParametricStrength: return params[0] * base_;
    case SourceKind::NetworkAugmented:
      return base_ + model_.gain * contract_network(grid_, *weights_, DiscrepancyNet::from_params(params),
                                                    model_.net_location);
    default: return base_;
    }
  }

private:
  GridSpec grid_;
  SourceTerm model_;
  std::shared_ptr<const std::vector<double>> weights_;
  double base_ = 0.0;
};

/// EKI indicator for one (design, measurement) pair.
inline IndicatorResult indicator_for(const Simulator &sim, const SourceTerm &model, Point theta_star,
                                     std::span<const double> params, const Measurement &y, const CampaignConfig &cfg,
                                     std::uint64_t seed) {
  const DiscrepancyForward fwd(sim, model, theta_star, y.design);
  const ForwardMap forward = [&](const Eigen::VectorXd &p) {
    return Eigen::VectorXd::Constant(1, fwd(std::span<const double>(p.data(), static_cast<std::size_t>(p.size()))));
  };
  const Eigen::MatrixXd gamma = Eigen::MatrixXd::Constant(1, 1, cfg.noise.sigma * cfg.noise.sigma);
  return informativeness(params, forward, Eigen::VectorXd::Constant(1, y.value), gamma, cfg.eki, seed);
}

/// Indicator on every measured candidate of a stage (same initial ensemble).
inline std::vector<IndicatorResult> candidate_indicators(const Simulator &sim, const SourceTerm &model,
                                                         Point theta_star, std::span<const double> params,
                                                         const Selection &sel, const CampaignConfig &cfg,
                                                         std::uint64_t seed) {
  std::vector<IndicatorResult> out(sel.table.size());
  parallel_for(sel.table.size(), cfg.workers, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const ScoredCandidate &sc = sel.table[i];
      if (!sc.measurement) throw std::logic_error("candidate indicator needs a measured candidate");
      out[i] = indicator_for(sim, model, theta_star, params, *sc.measurement, cfg, seed);
    }
  });
  return out;
}

/// Stage hooks used by the comparison study: after the indicator has run,
/// `choose_training` may replace the training measurement and force or veto
/// training. Returning nullopt keeps the default behavior.
struct TrainingOverride {
  Measurement data;
  bool train = true;
};
using TrainingHook = std::function<std::optional<TrainingOverride>(const StageRecord &)>;

/// Executes one stage, appending its record to `state`.
inline const StageRecord &run_stage(const CampaignConfig &cfg, const Simulator &sim, const TrueSystem &truth,
                                    CampaignState &state, int stage, const TrainingHook &hook = {}) {
  const auto started = std::chrono::steady_clock::now();
  StageRecord rec;
  rec.stage = stage;
  const double t = cfg.constraint.stage_dt * stage;
  const SourceTerm model = initial_model(cfg).with_discrepancy(state.params);
  const SourceTerm current = place(model, state.theta_star);
  if (cfg.refresh_posterior && state.posterior_params != state.params && !state.history.empty()) {
    state.posterior = refreshed_posterior(sim, state.posterior.grid, current, state.history, cfg.noise, cfg.workers);
    state.posterior_params = state.params;
  }

  // (1) design selection under the movement constraint
  const std::vector<Design> cands = candidates(state.last, cfg.constraint, cfg.candidates_per_axis, t);
  const PredictionTable table = predict_over_grid(sim, cands, state.posterior.grid, current, cfg.workers);
  const Measurer measure = [&](const Design &d) { return truth.measure(d, stage); };
  rec.selection = select_design(state.posterior, cands, cfg.mode, table, cfg.noise, measure, cfg.eig_samples,
                                derive_seed(cfg.seed, "eig", static_cast<std::uint64_t>(stage)), cfg.workers);

  // (2) measure the winner, (3) update, (4) theta_G*
  const ScoredCandidate &win = rec.selection.winner();
  rec.measurement = win.measurement ? *win.measurement : truth.measure(win.design, stage);
  rec.posterior = bayes_update(state.posterior, rec.measurement, table, cfg.noise).posterior;
  rec.theta_star = top_m_mean(rec.posterior, cfg.train.top_m);
  rec.map = rec.posterior.grid.node(map_estimate(rec.posterior));

  // (5) informativeness, (6) conditional training
  Measurement train_on = rec.measurement;
  bool train = false;
  if (cfg.train_enabled) {
    const std::uint64_t eki_seed = derive_seed(cfg.seed, "eki", static_cast<std::uint64_t>(stage));
    IndicatorRecord ind;
    const bool relative = cfg.eki.rule == ThresholdRule::Relative && cfg.mode == SelectionMode::Measured;
    if (relative) {
      for (const IndicatorResult &r : candidate_indicators(sim, model, rec.theta_star, state.params, rec.selection,
                                                           cfg, eki_seed)) {
        ind.candidate_final.push_back(r.final_kld());
        ind.candidate_kld.push_back(r.kld);
      }
      ind.kld = ind.candidate_kld[rec.selection.chosen];
    } else {
      ind.kld = indicator_for(sim, model, rec.theta_star, state.params, rec.measurement, cfg, eki_seed).kld;
    }
    ind.accepted = accept_indicator(ind.kld.empty() ? 0.0 : ind.kld.back(), cfg.eki, ind.candidate_final);
    train = ind.accepted;
    rec.indicator = std::move(ind);
  }
  if (hook) {
    if (auto o = hook(rec)) {
      train_on = o->data;
      train = o->train;
    }
  }
  std::vector<Measurement> data{train_on};
  if (cfg.train.accumulate_history) {
    data = state.history;
    data.push_back(train_on);
  }
  if (train && model.discrepancy_size() > 0) {
    const CalibrationProblem problem(sim, model, rec.theta_star, data, cfg.noise);
    rec.training = train_stage(problem, state.params, cfg.train);
    rec.trained = true;
    state.params = rec.training.params;
  }
  rec.params_after = state.params;

  state.posterior = rec.posterior;
  state.posterior_params = model.discrepancy_params();
  state.last = win.design;
  state.theta_star = rec.theta_star;
  state.history.push_back(rec.measurement);
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  state.records.push_back(std::move(rec));
  return state.records.back();
}

inline CampaignState run_campaign(const CampaignConfig &cfg, const Simulator &sim, const TrueSystem &truth,
                                  const TrainingHook &hook = {}) {
  cfg.validate();
  CampaignState state = initial_state(cfg);
  for (int i = 1; i <= cfg.stages; ++i) run_stage(cfg, sim, truth, state, i, hook);
  return state;
}

inline CampaignState run_campaign(const CampaignConfig &cfg) {
  cfg.validate();
  const Simulator sim = make_simulator(cfg);
  const TrueSystem truth(sim, cfg.true_source, cfg.noise, cfg.seed);
  return run_campaign(cfg, sim, truth);
}

/// Final model field (source placed at the true location, current
/// discrepancy parameters) and true field at time t, restricted to the
/// metrics window.
struct FieldComparison {
  std::vector<Point> nodes;
  std::vector<double> model;
  std::vector<double> truth;
  FieldMetrics metrics;
};

inline FieldComparison compare_fields(const CampaignConfig &cfg, const Simulator &sim, const TrueSystem &truth,
                                      std::span<const double> params, double t) {
  const SourceTerm model = place(initial_model(cfg).with_discrepancy(params), truth.truth().location());
  const StateField u = sim.solve(model, t);
  const StateField &u_true = *truth.field(t);
  FieldComparison out;
  const GridSpec &g = sim.grid();
  const double lo = cfg.metrics_window ? (*cfg.metrics_window)[0] : g.z_min;
  const double hi = cfg.metrics_window ? (*cfg.metrics_window)[1] : g.z_max;
  out.model = window_values(u, lo, hi);
  out.truth = window_values(u_true, lo, hi);
  StateField coords{g, std::vector<double>(g.size()), t};
  for (int axis = 0; axis < 2; ++axis) {
    for (int iy = 0; iy < g.n_points; ++iy)
      for (int ix = 0; ix < g.n_points; ++ix) coords.values[g.index(ix, iy)] = axis == 0 ? g.coord(ix) : g.coord(iy);
    const std::vector<double> c = window_values(coords, lo, hi);
    if (axis == 0)
      for (double x : c) out.nodes.push_back({x, 0.0});
    else
      for (std::size_t i = 0; i < c.size(); ++i) out.nodes[i].y = c[i];
  }
  out.metrics = field_metrics(out.model, out.truth);
  return out;
}

/// Structural comparison at one stage: the untrained-so-far model is
/// calibrated either on the candidate with the largest indicator value
/// (accepted) or the smallest (rejected); both branches then continue the
/// design loop with training frozen. The baseline never trains.
struct ComparisonResult {
  int stage = 0;
  std::size_t informative = 0; // candidate indices in the comparison stage's table
  std::size_t uninformative = 0;
  std::vector<double> informative_kld;
  std::vector<double> uninformative_kld;
  CampaignState accepted;
  CampaignState rejected;
  CampaignState baseline;
  FieldComparison accepted_field, rejected_field, baseline_field;
};

inline ComparisonResult run_comparison(const CampaignConfig &cfg) {
  cfg.validate();
  if (cfg.comparison_stage < 1 || cfg.comparison_stage > cfg.stages)
    throw ConfigError("comparison_stage must lie in [1, stages]");
  if (cfg.mode != SelectionMode::Measured) throw ConfigError("the comparison study needs measured mode");
  const Simulator sim = make_simulator(cfg);
  const TrueSystem truth(sim, cfg.true_source, cfg.noise, cfg.seed);
  CampaignConfig run_cfg = cfg;
  run_cfg.train_enabled = true;
  run_cfg.eki.rule = ThresholdRule::Relative;
  CampaignConfig frozen = run_cfg;
  frozen.train_enabled = false;

  ComparisonResult out;
  out.stage = cfg.comparison_stage;
  CampaignState shared = initial_state(run_cfg);
  for (int i = 1; i < cfg.comparison_stage; ++i) run_stage(run_cfg, sim, truth, shared, i);

  auto branch = [&](bool informative) {
    CampaignState s = shared;
    const TrainingHook hook = [&](const StageRecord &rec) -> std::optional<TrainingOverride> {
      const std::vector<double> &finals = rec.indicator->candidate_final;
      std::size_t pick = 0;
      for (std::size_t i = 1; i < finals.size(); ++i)
        if (informative ? finals[i] > finals[pick] : finals[i] < finals[pick]) pick = i;
      (informative ? out.informative : out.uninformative) = pick;
      (informative ? out.informative_kld : out.uninformative_kld) = rec.indicator->candidate_kld[pick];
      return TrainingOverride{*rec.selection.table[pick].measurement, true};
    };
    run_stage(run_cfg, sim, truth, s, cfg.comparison_stage, hook);
    for (int i = cfg.comparison_stage + 1; i <= cfg.stages; ++i) run_stage(frozen, sim, truth, s, i);
    return s;
  };
  out.accepted = branch(true);
  out.rejected = branch(false);
  out.baseline = run_campaign(frozen, sim, truth);

  const double t_final = cfg.constraint.stage_dt * cfg.stages;
  out.accepted_field = compare_fields(cfg, sim, truth, out.accepted.params, t_final);
  out.rejected_field = compare_fields(cfg, sim, truth, out.rejected.params, t_final);
  out.baseline_field = compare_fields(cfg, sim, truth, out.baseline.params, t_final);
  return out;
}

/// Joint (theta_x, theta_y, theta_s) grid benchmark with the true source form:
/// n^3 nodes, stage-wise measured BED over the joint posterior.
struct Benchmark3dResult {
  std::vector<double> xs, ys, ss;
  std::vector<double> mass; // index (is * ny + iy) * nx + ix
  std::vector<Design> designs;
};

inline Benchmark3dResult run_benchmark_3d(const CampaignConfig &cfg, int n, double s_min, double s_max) {
  cfg.validate();
  if (n < 2) throw ConfigError("benchmark grid needs n >= 2");
  const Simulator sim = make_simulator(cfg);
  const TrueSystem truth(sim, cfg.true_source, cfg.noise, cfg.seed);
  const ParamGrid loc = ParamGrid::uniform(cfg.param_min, cfg.param_max, n);
  Benchmark3dResult out;
  out.xs = loc.xs;
  out.ys = loc.ys;
  for (int i = 0; i < n; ++i) out.ss.push_back(s_min + (s_max - s_min) * i / (n - 1));
  const std::size_t n_loc = loc.size();
  out.mass.assign(n_loc * out.ss.size(), 1.0 / static_cast<double>(n_loc * out.ss.size()));
  const SourceTerm unit = SourceTerm::true_exponential({0.5, 0.5, cfg.model.theta_h, 1.0});
  Design last{cfg.constraint.initial.x, cfg.constraint.initial.y, 0.0};
  for (int stage = 1; stage <= cfg.stages; ++stage) {
    const std::vector<Design> cands =
        candidates(last, cfg.constraint, cfg.candidates_per_axis, cfg.constraint.stage_dt * stage);
    // Predictions are linear in theta_s: u(theta_x, theta_y, s) = s * u_unit(theta_x, theta_y).
    const PredictionTable table = predict_over_grid(sim, cands, loc, unit, cfg.workers);
    std::size_t best = 0;
    double best_ig = -1.0;
    std::vector<double> best_mass;
    for (std::size_t c = 0; c < cands.size(); ++c) {
      const Measurement y = truth.measure(cands[c], stage);
      const std::vector<double> &pred = table.at(c);
      std::vector<double> ll(out.mass.size());
      for (std::size_t is = 0; is < out.ss.size(); ++is)
        for (std::size_t k = 0; k < n_loc; ++k) ll[is * n_loc + k] = cfg.noise.log_density(y.value - out.ss[is] * pred[k]);
      std::vector<double> post;
      (void)posterior_masses(out.mass, ll, post);
      const double ig = kld_masses(post, out.mass);
      if (ig > best_ig) {
        best_ig = ig;
        best = c;
        best_mass = std::move(post);
      }
    }
    out.mass = std::move(best_mass);
    last = cands[best];
    out.designs.push_back(last);
  }
  return out;
}

} // namespace activebed

#endif // ACTIVEBED_CAMPAIGN_HPP
