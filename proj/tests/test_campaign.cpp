#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "activebed/artifacts.hpp"
#include "activebed/campaign.hpp"
#include "activebed/config.hpp"
#include "test_support.hpp"

using namespace activebed;
using activebed::testing::coarse_config;
using activebed::testing::max_abs_diff;

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch_dir(const std::string &name) {
  const fs::path p = fs::temp_directory_path() / ("activebed_test_" + name);
  fs::remove_all(p);
  return p;
}

void expect_feasible_path(const CampaignConfig &cfg, const CampaignState &s) {
  Point prev = cfg.constraint.initial;
  for (const StageRecord &r : s.records) {
    const Design &d = r.measurement.design;
    EXPECT_LE(std::max(std::abs(d.x - prev.x), std::abs(d.y - prev.y)), cfg.constraint.max_move + 1e-12);
    EXPECT_GE(std::min(d.x, d.y), cfg.constraint.lower);
    EXPECT_LE(std::max(d.x, d.y), cfg.constraint.upper);
    EXPECT_NEAR(d.t, cfg.constraint.stage_dt * r.stage, 1e-15);
    prev = d.location();
  }
}

} // namespace

TEST(Config, RoundTripsThroughJson) {
  for (Scenario s : {Scenario::Parametric, Scenario::Structural}) {
    CampaignConfig c = default_config(s);
    c.metrics_window = std::array<double, 2>{-0.5, 1.5};
    c.train.optimizer = Optimizer::GradientAscent;
    const json j = to_json(c);
    const CampaignConfig back = config_from_json(j);
    EXPECT_EQ(to_json(back), j);
    EXPECT_EQ(config_hash(back), config_hash(c));
  }
}

TEST(Config, PresetsDiffer) {
  const CampaignConfig p = default_config(Scenario::Parametric), s = default_config(Scenario::Structural);
  EXPECT_EQ(p.velocity_coefficient, 20.0);
  EXPECT_EQ(s.velocity_coefficient, 50.0);
  EXPECT_EQ(p.true_source.theta_x, 0.45);
  EXPECT_EQ(s.true_source.theta_x, 0.25);
  EXPECT_NE(config_hash(p), config_hash(s));
}

TEST(Config, MissingKeysTakePresetValues) {
  const CampaignConfig c = config_from_json(json::parse(R"({"scenario": "structural", "stages": 7})"));
  EXPECT_EQ(c.stages, 7);
  EXPECT_EQ(c.velocity_coefficient, 50.0);
}

TEST(Config, RejectsUnknownKeysAndBadTypes) {
  EXPECT_THROW(config_from_json(json::parse(R"({"stagez": 3})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"eki": {"threshold": {"rul": "relative"}}})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"stages": "five"})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"stages": 2.5})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"seed": -1})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"noise_sigma": 0})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"scenario": "other"})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"grid": {"n_points": 2}})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"grid": {"stability_factor": 1.5}})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"constraint": {"initial": [0.5]}})")), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Config, ShippedConfigsLoad) {
  for (const char *name : {"parametric.json", "structural.json"}) {
    const fs::path p = fs::path(ACTIVEBED_SOURCE_DIR) / "configs" / name;
    EXPECT_NO_THROW(load_config(p.string())) << p;
  }
}

TEST(Metrics, HandOracle) {
  const std::vector<double> u{1.0, 2.0, 3.0, 4.0}, t{1.0, 1.0, 4.0, 4.0};
  const FieldMetrics m = field_metrics(u, t);
  EXPECT_DOUBLE_EQ(m.mse, (0.0 + 1.0 + 1.0 + 0.0) / 4.0);
  EXPECT_DOUBLE_EQ(m.re, 2.0 / 10.0);
  EXPECT_THROW(field_metrics(u, std::vector<double>(4, 0.0)), NumericalFault);
}

TEST(Metrics, WindowSelectsNodes) {
  const GridSpec g = GridSpec::make(-2.0, 3.0, 11); // h = 0.5
  StateField f = StateField::zeros(g);
  for (std::size_t i = 0; i < f.values.size(); ++i) f.values[i] = static_cast<double>(i);
  const std::vector<double> w = window_values(f, 0.0, 1.0); // x, y in {0, 0.5, 1}
  ASSERT_EQ(w.size(), 9u);
  EXPECT_EQ(w.front(), static_cast<double>(g.index(4, 4)));
  EXPECT_EQ(w.back(), static_cast<double>(g.index(6, 6)));
}

// The sensitivity-based prediction table against one forward solve per node.
TEST(Prediction, MatchesForwardReference) {
  CampaignConfig cfg = coarse_config(Scenario::Structural);
  cfg.grid.n_points = 21;
  const Simulator sim = make_simulator(cfg);
  const ParamGrid params = ParamGrid::uniform(0.0, 1.0, 4);
  const std::vector<Design> designs{{0.5, 0.5, 0.05}, {0.3, 0.7, 0.1}};
  const SourceParams p{0.5, 0.5, 0.2, 2.0};
  std::mt19937_64 rng(71);
  const std::vector<SourceTerm> models{
      SourceTerm::true_exponential(p), SourceTerm::parametric(p), SourceTerm::rational(p),
      SourceTerm::augmented(p, DiscrepancyNet::random(rng(), 0.3), 100.0, {0.25, 0.25})};
  for (const SourceTerm &m : models) {
    const PredictionTable fast = predict_over_grid(sim, designs, params, m, 1);
    const PredictionTable ref = predict_over_grid_forward(sim, designs, params, m);
    for (std::size_t i = 0; i < designs.size(); ++i) {
      const double scale = std::max(1.0, *std::max_element(ref.at(i).begin(), ref.at(i).end()));
      EXPECT_LT(max_abs_diff(fast.at(i), ref.at(i)), 1e-11 * scale);
    }
  }
}

TEST(TrueSystem, NoiseIsKeyedByStageAndLocation) {
  const CampaignConfig cfg = coarse_config(Scenario::Parametric);
  const Simulator sim = make_simulator(cfg);
  const TrueSystem truth(sim, cfg.true_source, cfg.noise, cfg.seed);
  const Design d{0.5, 0.3, 0.1};
  EXPECT_EQ(truth.measure(d, 2).value, truth.measure(d, 2).value);
  EXPECT_NE(truth.measure(d, 2).value, truth.measure(d, 3).value);
  EXPECT_NE(truth.measure(d, 2).value, truth.measure(Design{0.5, 0.4, 0.1}, 2).value);
  const double clean = observe(sim.solve(SourceTerm::true_exponential(cfg.true_source), 0.1), d.location());
  EXPECT_NEAR(truth.clean(d), clean, 1e-14 * std::abs(clean));
}

// Rebuilding from the uniform prior under an unchanged model reproduces the
// stage-by-stage posterior.
TEST(Campaign, RefreshedPosteriorMatchesSequential) {
  CampaignConfig cfg = coarse_config(Scenario::Parametric);
  cfg.train_enabled = false;
  const Simulator sim = make_simulator(cfg);
  const TrueSystem truth(sim, cfg.true_source, cfg.noise, cfg.seed);
  const CampaignState s = run_campaign(cfg, sim, truth);
  const SourceTerm model = place(initial_model(cfg), s.theta_star);
  const ParamPosterior rebuilt = refreshed_posterior(sim, s.posterior.grid, model, s.history, cfg.noise, 1);
  for (std::size_t i = 0; i < rebuilt.mass.size(); ++i) EXPECT_NEAR(rebuilt.mass[i], s.posterior.mass[i], 1e-12);
}

TEST(Campaign, DesignsRespectMovementConstraint) {
  for (Scenario sc : {Scenario::Parametric, Scenario::Structural})
    for (SelectionMode mode : {SelectionMode::Measured, SelectionMode::Predictive}) {
      CampaignConfig cfg = coarse_config(sc, 3);
      cfg.mode = mode;
      cfg.stages = 4;
      cfg.eig_samples = 8;
      expect_feasible_path(cfg, run_campaign(cfg));
    }
}

TEST(Campaign, ParametricTrainingMovesStrengthTowardTruth) {
  CampaignConfig cfg = coarse_config(Scenario::Parametric);
  cfg.train.iterations = 100;
  const CampaignState s = run_campaign(cfg);
  EXPECT_LT(std::abs(s.params[0] - 2.0), std::abs(3.0 - 2.0));
}

TEST(Campaign, RecordsAreConsistent) {
  const CampaignConfig cfg = coarse_config(Scenario::Structural);
  const CampaignState s = run_campaign(cfg);
  ASSERT_EQ(s.records.size(), 3u);
  for (const StageRecord &r : s.records) {
    ASSERT_TRUE(r.indicator.has_value());
    EXPECT_EQ(r.indicator->candidate_final.size(), r.selection.table.size());
    EXPECT_EQ(r.indicator->kld.size(), static_cast<std::size_t>(cfg.eki.iterations));
    EXPECT_EQ(r.trained, r.indicator->accepted);
    double mass = 0.0;
    for (double m : r.posterior.mass) mass += m;
    EXPECT_NEAR(mass, 1.0, 1e-12);
  }
}

TEST(Comparison, BranchesShareEarlyStages) {
  CampaignConfig cfg = coarse_config(Scenario::Structural);
  cfg.stages = 4;
  cfg.comparison_stage = 2;
  const ComparisonResult c = run_comparison(cfg);
  EXPECT_EQ(c.accepted.records[0].measurement.value, c.rejected.records[0].measurement.value);
  EXPECT_NE(c.informative, c.uninformative);
  EXPECT_GE(c.informative_kld.back(), c.uninformative_kld.back());
  for (const CampaignState *s : {&c.accepted, &c.rejected, &c.baseline}) {
    EXPECT_EQ(s->records.size(), 4u);
    for (std::size_t i = 2; i < 4; ++i) EXPECT_FALSE(s->records[i].trained);
  }
  for (const StageRecord &r : c.baseline.records) EXPECT_FALSE(r.trained);
}

TEST(Artifacts, RerunIsByteIdentical) {
  const CampaignConfig cfg = coarse_config(Scenario::Structural, 9);
  const fs::path a = scratch_dir("det_a"), b = scratch_dir("det_b");
  prepare_output_dir(a.string());
  prepare_output_dir(b.string());
  const std::vector<std::string> fa = write_campaign_tables(a, cfg, run_campaign(cfg));
  const std::vector<std::string> fb = write_campaign_tables(b, cfg, run_campaign(cfg));
  ASSERT_EQ(fa, fb);
  for (const std::string &f : fa) EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Artifacts, CsvIsCrlfWithHeader) {
  CsvTable t("a,b");
  t.row(1, 0.1);
  EXPECT_EQ(t.str(), "a,b\r\n1,0.10000000000000001\r\n");
}

TEST(Artifacts, ManifestListsSeedsAndHash) {
  const CampaignConfig cfg = coarse_config(Scenario::Parametric);
  const fs::path dir = scratch_dir("manifest");
  prepare_output_dir(dir.string());
  ManifestInfo info;
  info.command = "run";
  info.files = {"stages.csv"};
  write_manifest(dir, cfg, info);
  const json m = json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(m["config_hash"], config_hash(cfg));
  EXPECT_EQ(m["seeds"]["master"], cfg.seed);
  EXPECT_EQ(m["seeds"]["eki_per_stage"].size(), static_cast<std::size_t>(cfg.stages));
  EXPECT_EQ(config_from_json(m["config"]).seed, cfg.seed);
  fs::remove_all(dir);
}

TEST(Artifacts, UnwritableOutputIsConfigError) {
  EXPECT_THROW(prepare_output_dir("/proc/activebed-cannot-exist"), ConfigError);
}
