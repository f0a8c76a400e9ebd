// activebed: sequential design campaigns for contaminant-source inversion.
//
//   activebed run --config cfg.json [--stages N] [--mode measured|predictive] [--out DIR] [--seed S]
//   activebed compare --config cfg.json [--out DIR] [--seed S]
//   activebed benchmark-3d --config cfg.json [--n 21] [--out DIR]
//   activebed validate-gradients --scenario parametric|structural
//   activebed emit-default-config --scenario parametric|structural
//
// Exit codes: 0 success, 2 configuration error, 3 numerical fault.

#include <chrono>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "activebed/artifacts.hpp"
#include "activebed/campaign.hpp"
#include "activebed/config.hpp"
#include "activebed/gradcheck.hpp"

using namespace activebed;

namespace {

constexpr int kConfigError = 2;
constexpr int kNumericalFault = 3;

struct Overrides {
  std::string config_path;
  std::optional<int> stages;
  std::optional<std::string> mode;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
};

CampaignConfig load_with_overrides(const Overrides &o) {
  CampaignConfig cfg = load_config(o.config_path);
  if (o.stages) cfg.stages = *o.stages;
  if (o.mode) cfg.mode = parse_mode(*o.mode);
  if (o.out) cfg.output_dir = *o.out;
  if (o.seed) cfg.seed = *o.seed;
  cfg.validate();
  return cfg;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int cmd_run(const Overrides &o) {
  const CampaignConfig cfg = load_with_overrides(o);
  prepare_output_dir(cfg.output_dir);
  const auto t0 = std::chrono::steady_clock::now();
  const Simulator sim = make_simulator(cfg);
  const TrueSystem truth(sim, cfg.true_source, cfg.noise, cfg.seed);
  CampaignState state = initial_state(cfg);
  ManifestInfo info;
  info.command = "run";
  int code = 0;
  try {
    for (int i = 1; i <= cfg.stages; ++i) {
      const StageRecord &r = run_stage(cfg, sim, truth, state, i);
      std::cerr << "stage " << i << ": design (" << r.measurement.design.x << ", " << r.measurement.design.y
                << ") map (" << r.map.x << ", " << r.map.y << ")"
                << (r.indicator ? (r.indicator->accepted ? " accepted" : " rejected") : "")
                << (r.trained ? " trained" : "") << " [" << r.seconds << " s]\n";
    }
  } catch (const NumericalFault &e) {
    std::cerr << "numerical fault in stage " << state.records.size() + 1 << ": " << e.what() << "\n";
    info.status = std::string("numerical fault: ") + e.what();
    code = kNumericalFault;
  }
  const fs::path dir(cfg.output_dir);
  info.files = write_campaign_tables(dir, cfg, state);
  if (code == 0 && cfg.stages > 0) {
    const double t_final = cfg.constraint.stage_dt * cfg.stages;
    const FieldComparison initial = compare_fields(cfg, sim, truth, initial_state(cfg).params, t_final);
    const FieldComparison final = compare_fields(cfg, sim, truth, state.params, t_final);
    write_file(dir / "final_field.csv", field_csv(final));
    write_file(dir / "metrics.csv", metrics_csv({{"initial", initial.metrics}, {"final", final.metrics}}));
    info.files.insert(info.files.end(), {"final_field.csv", "metrics.csv"});
  }
  for (const StageRecord &r : state.records) info.stage_seconds.push_back(r.seconds);
  info.total_seconds = seconds_since(t0);
  write_manifest(dir, cfg, info);
  return code;
}

int cmd_compare(const Overrides &o) {
  const CampaignConfig cfg = load_with_overrides(o);
  prepare_output_dir(cfg.output_dir);
  const auto t0 = std::chrono::steady_clock::now();
  const ComparisonResult c = run_comparison(cfg);
  const fs::path dir(cfg.output_dir);
  ManifestInfo info;
  info.command = "compare";
  auto branch_dir = [&](const std::string &name, const CampaignState &s) {
    const fs::path sub = dir / name;
    fs::create_directories(sub);
    for (const std::string &f : write_campaign_tables(sub, cfg, s)) info.files.push_back(name + "/" + f);
  };
  branch_dir("accepted", c.accepted);
  branch_dir("rejected", c.rejected);
  branch_dir("baseline", c.baseline);
  write_file(dir / "metrics.csv", metrics_csv({{"corrected-accepted", c.accepted_field.metrics},
                                               {"corrected-rejected", c.rejected_field.metrics},
                                               {"baseline", c.baseline_field.metrics}}));
  CsvTable kld("variant,candidate_x,candidate_y,eki_iteration,kld");
  const StageRecord &stage_rec = c.accepted.records.at(static_cast<std::size_t>(c.stage - 1));
  auto add = [&](const char *name, std::size_t idx, const std::vector<double> &traj) {
    const Design &d = stage_rec.selection.table.at(idx).design;
    for (std::size_t k = 0; k < traj.size(); ++k) kld.row(name, d.x, d.y, k + 1, traj[k]);
  };
  add("informative", c.informative, c.informative_kld);
  add("uninformative", c.uninformative, c.uninformative_kld);
  write_file(dir / "eki_comparison.csv", kld.str());
  write_file(dir / "final_field_accepted.csv", field_csv(c.accepted_field));
  write_file(dir / "final_field_rejected.csv", field_csv(c.rejected_field));
  write_file(dir / "final_field_baseline.csv", field_csv(c.baseline_field));
  info.files.insert(info.files.end(), {"metrics.csv", "eki_comparison.csv", "final_field_accepted.csv",
                                       "final_field_rejected.csv", "final_field_baseline.csv"});
  info.total_seconds = seconds_since(t0);
  write_manifest(dir, cfg, info);
  std::cout << "variant,mse,re\n"
            << "corrected-accepted," << c.accepted_field.metrics.mse << "," << c.accepted_field.metrics.re << "\n"
            << "corrected-rejected," << c.rejected_field.metrics.mse << "," << c.rejected_field.metrics.re << "\n"
            << "baseline," << c.baseline_field.metrics.mse << "," << c.baseline_field.metrics.re << "\n";
  return 0;
}

int cmd_benchmark(const Overrides &o, int n, double s_min, double s_max) {
  CampaignConfig cfg = load_with_overrides(o);
  prepare_output_dir(cfg.output_dir);
  const auto t0 = std::chrono::steady_clock::now();
  const Benchmark3dResult b = run_benchmark_3d(cfg, n, s_min, s_max);
  const fs::path dir(cfg.output_dir);
  CsvTable t("theta_x,theta_y,theta_s,mass");
  const std::size_t nx = b.xs.size(), ny = b.ys.size();
  for (std::size_t is = 0; is < b.ss.size(); ++is)
    for (std::size_t iy = 0; iy < ny; ++iy)
      for (std::size_t ix = 0; ix < nx; ++ix) t.row(b.xs[ix], b.ys[iy], b.ss[is], b.mass[(is * ny + iy) * nx + ix]);
  write_file(dir / "benchmark_3d_posterior.csv", t.str());
  CsvTable d("stage,design_x,design_y,design_t");
  for (std::size_t i = 0; i < b.designs.size(); ++i) d.row(i + 1, b.designs[i].x, b.designs[i].y, b.designs[i].t);
  write_file(dir / "benchmark_3d_designs.csv", d.str());
  ManifestInfo info;
  info.command = "benchmark-3d";
  info.files = {"benchmark_3d_posterior.csv", "benchmark_3d_designs.csv"};
  info.total_seconds = seconds_since(t0);
  write_manifest(dir, cfg, info);
  return 0;
}

int cmd_validate(const std::string &scenario, std::uint64_t seed, int draws) {
  const GradientCheck r = check_gradients(parse_scenario(scenario), draws, seed);
  const bool ok = r.max_relative_error < 1e-3;
  std::cout << scenario << ": " << r.draws << " draws, " << r.dimension
            << " parameters, max relative error " << r.max_relative_error << (ok ? " (ok)" : " (FAILED)") << "\n";
  return ok ? 0 : kNumericalFault;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Sequential Bayesian experimental design with online discrepancy correction"};
  app.require_subcommand(1);

  Overrides run_opts, cmp_opts, bench_opts;
  auto *run = app.add_subcommand("run", "Run a design campaign");
  run->add_option("--config", run_opts.config_path, "Campaign config (JSON)")->required();
  run->add_option("--stages", run_opts.stages, "Number of stages");
  run->add_option("--mode", run_opts.mode, "measured or predictive");
  run->add_option("--out", run_opts.out, "Output directory");
  run->add_option("--seed", run_opts.seed, "Master seed");

  auto *cmp = app.add_subcommand("compare", "Accepted vs rejected training data at one stage, plus baseline");
  cmp->add_option("--config", cmp_opts.config_path, "Campaign config (JSON)")->required();
  cmp->add_option("--out", cmp_opts.out, "Output directory");
  cmp->add_option("--seed", cmp_opts.seed, "Master seed");

  int bench_n = 21;
  double s_min = 1.0, s_max = 3.0;
  auto *bench = app.add_subcommand("benchmark-3d", "Joint (theta_x, theta_y, theta_s) grid benchmark");
  bench->add_option("--config", bench_opts.config_path, "Campaign config (JSON)")->required();
  bench->add_option("--n", bench_n, "Nodes per axis")->check(CLI::Range(2, 201));
  bench->add_option("--s-min", s_min, "Lower theta_s bound");
  bench->add_option("--s-max", s_max, "Upper theta_s bound");
  bench->add_option("--out", bench_opts.out, "Output directory");
  bench->add_option("--seed", bench_opts.seed, "Master seed");

  std::string vg_scenario;
  std::uint64_t vg_seed = 1;
  int vg_draws = 20;
  auto *vg = app.add_subcommand("validate-gradients", "Adjoint vs finite-difference gradient check");
  vg->add_option("--scenario", vg_scenario, "parametric or structural")->required();
  vg->add_option("--seed", vg_seed, "Seed");
  vg->add_option("--draws", vg_draws, "Random parameter draws")->check(CLI::PositiveNumber);

  std::string emit_scenario;
  auto *emit = app.add_subcommand("emit-default-config", "Print a scenario preset as JSON");
  emit->add_option("--scenario", emit_scenario, "parametric or structural")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (*run) return cmd_run(run_opts);
    if (*cmp) return cmd_compare(cmp_opts);
    if (*bench) return cmd_benchmark(bench_opts, bench_n, s_min, s_max);
    if (*vg) return cmd_validate(vg_scenario, vg_seed, vg_draws);
    if (*emit) {
      std::cout << to_json(default_config(parse_scenario(emit_scenario))).dump(2) << "\n";
      return 0;
    }
  } catch (const ConfigError &e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const NumericalFault &e) {
    std::cerr << "numerical fault: " << e.what() << "\n";
    return kNumericalFault;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
