#ifndef ACTIVEBED_CONFIG_HPP
#define ACTIVEBED_CONFIG_HPP

// JSON (de)serialization of CampaignConfig. Unknown keys and type mismatches
// are rejected; missing keys take the scenario preset's value.

#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "activebed/campaign.hpp"

namespace activebed {

using json = nlohmann::json;

inline std::string scenario_name(Scenario s) { return s == Scenario::Parametric ? "parametric" : "structural"; }

inline Scenario parse_scenario(const std::string &tag) {
  if (tag == "parametric") return Scenario::Parametric;
  if (tag == "structural") return Scenario::Structural;
  throw ConfigError("unknown scenario '" + tag + "' (expected parametric or structural)");
}

inline SelectionMode parse_mode(const std::string &tag) {
  if (tag == "measured") return SelectionMode::Measured;
  if (tag == "predictive") return SelectionMode::Predictive;
  throw ConfigError("unknown mode '" + tag + "' (expected measured or predictive)");
}

inline std::string mode_name(SelectionMode m) { return m == SelectionMode::Measured ? "measured" : "predictive"; }

inline json to_json(const CampaignConfig &c) {
  json window = nullptr;
  if (c.metrics_window) window = json::array({(*c.metrics_window)[0], (*c.metrics_window)[1]});
  return {
      {"scenario", scenario_name(c.scenario)},
      {"stages", c.stages},
      {"mode", mode_name(c.mode)},
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"workers", c.workers},
      {"grid",
       {{"z_min", c.grid.z_min},
        {"z_max", c.grid.z_max},
        {"n_points", c.grid.n_points},
        {"stability_factor", c.integrator.stability_factor},
        {"cfl_factor", c.integrator.cfl_factor}}},
      {"velocity_coefficient", c.velocity_coefficient},
      {"param_grid", {{"min", c.param_min}, {"max", c.param_max}, {"n", c.param_points}}},
      {"noise_sigma", c.noise.sigma},
      {"constraint",
       {{"max_move", c.constraint.max_move},
        {"stage_dt", c.constraint.stage_dt},
        {"initial", json::array({c.constraint.initial.x, c.constraint.initial.y})},
        {"lower", c.constraint.lower},
        {"upper", c.constraint.upper},
        {"n_per_axis", c.candidates_per_axis}}},
      {"true_source",
       {{"theta_x", c.true_source.theta_x},
        {"theta_y", c.true_source.theta_y},
        {"theta_h", c.true_source.theta_h},
        {"theta_s", c.true_source.theta_s}}},
      {"model",
       {{"theta_h", c.model.theta_h},
        {"theta_s", c.model.theta_s},
        {"net_gain", c.model.net_gain},
        {"net_init_range", c.model.net_init_range}}},
      {"train",
       {{"enabled", c.train_enabled},
        {"iterations", c.train.iterations},
        {"learning_rate", c.train.learning_rate},
        {"optimizer", c.train.optimizer == Optimizer::Adam ? "adam" : "gradient-ascent"},
        {"top_m", c.train.top_m},
        {"accumulate_history", c.train.accumulate_history},
        {"refresh_posterior", c.refresh_posterior}}},
      {"eki",
       {{"ensemble_size", c.eki.ensemble_size},
        {"iterations", c.eki.iterations},
        {"regularization", c.eki.regularization},
        {"perturbation_std", c.eki.perturbation_std},
        {"threshold",
         {{"rule", c.eki.rule == ThresholdRule::Relative ? "relative" : "absolute"},
          {"relative", c.eki.relative_threshold},
          {"absolute", c.eki.absolute_threshold}}}}},
      {"eig_samples", c.eig_samples},
      {"comparison_stage", c.comparison_stage},
      {"metrics_window", window},
  };
}

namespace detail {

/// Walks one JSON object, rejecting keys that are not listed.
class ObjectReader {
public:
  ObjectReader(const json &j, std::string path, std::initializer_list<const char *> allowed) : j_(j), path_(path) {
    if (!j.is_object()) throw ConfigError(path_ + " must be an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto &[key, value] : j.items())
      if (!ok.count(key)) throw ConfigError("unknown key '" + key + "' in " + path_);
  }

  bool has(const char *key) const { return j_.contains(key); }
  const json &at(const char *key) const { return j_.at(key); }
  std::string where(const char *key) const { return path_ + "." + key; }

  void number(const char *key, double &out) const {
    if (!has(key)) return;
    if (!j_.at(key).is_number()) throw ConfigError(where(key) + " must be a number");
    out = j_.at(key).get<double>();
  }

  template <typename Int>
  void integer(const char *key, Int &out) const {
    if (!has(key)) return;
    const json &v = j_.at(key);
    if (!v.is_number_integer()) throw ConfigError(where(key) + " must be an integer");
    if (std::is_unsigned_v<Int> && v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)
      throw ConfigError(where(key) + " must be nonnegative");
    out = v.get<Int>();
  }

  void boolean(const char *key, bool &out) const {
    if (!has(key)) return;
    if (!j_.at(key).is_boolean()) throw ConfigError(where(key) + " must be true or false");
    out = j_.at(key).get<bool>();
  }

  void string(const char *key, std::string &out) const {
    if (!has(key)) return;
    if (!j_.at(key).is_string()) throw ConfigError(where(key) + " must be a string");
    out = j_.at(key).get<std::string>();
  }

  void pair(const char *key, double &a, double &b) const {
    if (!has(key)) return;
    const json &v = j_.at(key);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
      throw ConfigError(where(key) + " must be an array of two numbers");
    a = v[0].get<double>();
    b = v[1].get<double>();
  }

private:
  const json &j_;
  std::string path_;
};

} // namespace detail

/// Parses and validates a campaign configuration.
inline CampaignConfig config_from_json(const json &j) {
  using detail::ObjectReader;
  const ObjectReader root(j, "config",
                          {"scenario", "stages", "mode", "seed", "output_dir", "workers", "grid", "velocity_coefficient",
                           "param_grid", "noise_sigma", "constraint", "true_source", "model", "train", "eki",
                           "eig_samples", "comparison_stage", "metrics_window"});
  std::string tag = "parametric";
  root.string("scenario", tag);
  CampaignConfig c = default_config(parse_scenario(tag));

  root.integer("stages", c.stages);
  if (root.has("mode")) {
    std::string m;
    root.string("mode", m);
    c.mode = parse_mode(m);
  }
  root.integer("seed", c.seed);
  root.string("output_dir", c.output_dir);
  root.integer("workers", c.workers);
  root.number("velocity_coefficient", c.velocity_coefficient);
  root.number("noise_sigma", c.noise.sigma);
  root.integer("eig_samples", c.eig_samples);
  root.integer("comparison_stage", c.comparison_stage);

  if (root.has("grid")) {
    const ObjectReader g(root.at("grid"), "config.grid",
                         {"z_min", "z_max", "n_points", "stability_factor", "cfl_factor"});
    g.number("z_min", c.grid.z_min);
    g.number("z_max", c.grid.z_max);
    g.integer("n_points", c.grid.n_points);
    g.number("stability_factor", c.integrator.stability_factor);
    g.number("cfl_factor", c.integrator.cfl_factor);
  }
  if (root.has("param_grid")) {
    const ObjectReader g(root.at("param_grid"), "config.param_grid", {"min", "max", "n"});
    g.number("min", c.param_min);
    g.number("max", c.param_max);
    g.integer("n", c.param_points);
  }
  if (root.has("constraint")) {
    const ObjectReader g(root.at("constraint"), "config.constraint",
                         {"max_move", "stage_dt", "initial", "lower", "upper", "n_per_axis"});
    g.number("max_move", c.constraint.max_move);
    g.number("stage_dt", c.constraint.stage_dt);
    g.pair("initial", c.constraint.initial.x, c.constraint.initial.y);
    g.number("lower", c.constraint.lower);
    g.number("upper", c.constraint.upper);
    g.integer("n_per_axis", c.candidates_per_axis);
  }
  if (root.has("true_source")) {
    const ObjectReader g(root.at("true_source"), "config.true_source", {"theta_x", "theta_y", "theta_h", "theta_s"});
    g.number("theta_x", c.true_source.theta_x);
    g.number("theta_y", c.true_source.theta_y);
    g.number("theta_h", c.true_source.theta_h);
    g.number("theta_s", c.true_source.theta_s);
  }
  if (root.has("model")) {
    const ObjectReader g(root.at("model"), "config.model", {"theta_h", "theta_s", "net_gain", "net_init_range"});
    g.number("theta_h", c.model.theta_h);
    g.number("theta_s", c.model.theta_s);
    g.number("net_gain", c.model.net_gain);
    g.number("net_init_range", c.model.net_init_range);
  }
  if (root.has("train")) {
    const ObjectReader g(root.at("train"), "config.train",
                         {"enabled", "iterations", "learning_rate", "optimizer", "top_m", "accumulate_history",
                          "refresh_posterior"});
    g.boolean("enabled", c.train_enabled);
    g.integer("iterations", c.train.iterations);
    g.number("learning_rate", c.train.learning_rate);
    if (g.has("optimizer")) {
      std::string o;
      g.string("optimizer", o);
      if (o == "adam") c.train.optimizer = Optimizer::Adam;
      else if (o == "gradient-ascent") c.train.optimizer = Optimizer::GradientAscent;
      else throw ConfigError("config.train.optimizer must be adam or gradient-ascent");
    }
    g.integer("top_m", c.train.top_m);
    g.boolean("accumulate_history", c.train.accumulate_history);
    g.boolean("refresh_posterior", c.refresh_posterior);
  }
  if (root.has("eki")) {
    const ObjectReader g(root.at("eki"), "config.eki",
                         {"ensemble_size", "iterations", "regularization", "perturbation_std", "threshold"});
    g.integer("ensemble_size", c.eki.ensemble_size);
    g.integer("iterations", c.eki.iterations);
    g.number("regularization", c.eki.regularization);
    g.number("perturbation_std", c.eki.perturbation_std);
    if (g.has("threshold")) {
      const ObjectReader t(g.at("threshold"), "config.eki.threshold", {"rule", "relative", "absolute"});
      if (t.has("rule")) {
        std::string r;
        t.string("rule", r);
        if (r == "relative") c.eki.rule = ThresholdRule::Relative;
        else if (r == "absolute") c.eki.rule = ThresholdRule::Absolute;
        else throw ConfigError("config.eki.threshold.rule must be relative or absolute");
      }
      t.number("relative", c.eki.relative_threshold);
      t.number("absolute", c.eki.absolute_threshold);
    }
  }
  if (root.has("metrics_window") && !root.at("metrics_window").is_null()) {
    std::array<double, 2> w{};
    root.pair("metrics_window", w[0], w[1]);
    c.metrics_window = w;
  }
  c.validate();
  return c;
}

inline CampaignConfig load_config(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error &e) {
    throw ConfigError(path + ": " + e.what());
  }
  return config_from_json(j);
}

/// FNV-1a hash of the canonical JSON form, as 16 hex digits.
inline std::string config_hash(const CampaignConfig &c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(to_json(c).dump())));
  return buf;
}

} // namespace activebed

#endif // ACTIVEBED_CONFIG_HPP
