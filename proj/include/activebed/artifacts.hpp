#ifndef ACTIVEBED_ARTIFACTS_HPP
#define ACTIVEBED_ARTIFACTS_HPP

// Campaign outputs: CSV tables (RFC 4180, numeric cells only) and a JSON
// manifest. Wall-clock timings go to the manifest only, so reruns with the
// same seeds reproduce every CSV byte for byte.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "activebed/campaign.hpp"
#include "activebed/config.hpp"

namespace activebed {

namespace fs = std::filesystem;

/// Creates the directory and checks that files can be written into it.
inline void prepare_output_dir(const std::string &dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create output directory " + dir);
  const fs::path probe = fs::path(dir) / ".write-probe";
  {
    std::ofstream out(probe);
    if (!out || !(out << "ok")) throw ConfigError("output directory is not writable: " + dir);
  }
  fs::remove(probe, ec);
}

/// Writes `text` to `path` through a temporary file and a rename.
inline void write_file(const fs::path &path, const std::string &text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

class CsvTable {
public:
  explicit CsvTable(const std::string &header) { out_ << std::setprecision(17) << header << "\r\n"; }

  template <typename... Cells>
  void row(const Cells &...cells) {
    bool first = true;
    ((out_ << (first ? "" : ",") << cells, first = false), ...);
    out_ << "\r\n";
  }

  std::string str() const { return out_.str(); }

private:
  std::ostringstream out_;
};

inline std::string posterior_csv(const ParamPosterior &post) {
  CsvTable t("x,y,mass");
  for (std::size_t k = 0; k < post.mass.size(); ++k) {
    const Point p = post.grid.node(k);
    t.row(p.x, p.y, post.mass[k]);
  }
  return t.str();
}

inline std::string scores_csv(const std::vector<StageRecord> &records) {
  CsvTable t("stage,candidate_x,candidate_y,score,chosen_flag");
  for (const StageRecord &r : records)
    for (std::size_t i = 0; i < r.selection.table.size(); ++i) {
      const ScoredCandidate &c = r.selection.table[i];
      t.row(r.stage, c.design.x, c.design.y, c.score, i == r.selection.chosen ? 1 : 0);
    }
  return t.str();
}

inline std::string loss_trace_csv(const std::vector<StageRecord> &records, bool scalar) {
  CsvTable t(scalar ? "stage,iteration,objective,param_norm,theta_s" : "stage,iteration,objective,param_norm");
  for (const StageRecord &r : records) {
    if (!r.trained) continue;
    for (std::size_t i = 0; i < r.training.objective_trace.size(); ++i) {
      if (scalar)
        t.row(r.stage, i, r.training.objective_trace[i], r.training.param_norms[i], r.training.param_trace[i][0]);
      else
        t.row(r.stage, i, r.training.objective_trace[i], r.training.param_norms[i]);
    }
  }
  return t.str();
}

inline std::string eki_csv(const std::vector<StageRecord> &records) {
  CsvTable t("stage,eki_iteration,kld,accepted_flag");
  for (const StageRecord &r : records) {
    if (!r.indicator) continue;
    for (std::size_t k = 0; k < r.indicator->kld.size(); ++k)
      t.row(r.stage, k + 1, r.indicator->kld[k], r.indicator->accepted ? 1 : 0);
  }
  return t.str();
}

inline std::string stages_csv(const std::vector<StageRecord> &records) {
  CsvTable t("stage,design_x,design_y,design_t,measurement,theta_star_x,theta_star_y,map_x,map_y,final_kld,"
             "accepted_flag,trained_flag,param_norm");
  for (const StageRecord &r : records) {
    const double kld = r.indicator && !r.indicator->kld.empty() ? r.indicator->kld.back() : 0.0;
    t.row(r.stage, r.measurement.design.x, r.measurement.design.y, r.measurement.design.t, r.measurement.value,
          r.theta_star.x, r.theta_star.y, r.map.x, r.map.y, kld, r.indicator && r.indicator->accepted ? 1 : 0,
          r.trained ? 1 : 0, l2_norm(r.params_after));
  }
  return t.str();
}

inline std::string field_csv(const FieldComparison &f) {
  CsvTable t("x,y,model,true");
  for (std::size_t i = 0; i < f.nodes.size(); ++i) t.row(f.nodes[i].x, f.nodes[i].y, f.model[i], f.truth[i]);
  return t.str();
}

struct MetricRow {
  std::string variant;
  FieldMetrics metrics;
};

inline std::string metrics_csv(const std::vector<MetricRow> &rows) {
  CsvTable t("variant,mse,re");
  for (const MetricRow &r : rows) t.row(r.variant, r.metrics.mse, r.metrics.re);
  return t.str();
}

/// Per-stage posteriors, score table, loss and EKI traces, stage summary and
/// the final discrepancy parameters of one campaign.
inline std::vector<std::string> write_campaign_tables(const fs::path &dir, const CampaignConfig &cfg,
                                                      const CampaignState &state) {
  std::vector<std::string> files;
  auto put = [&](const std::string &name, const std::string &text) {
    write_file(dir / name, text);
    files.push_back(name);
  };
  for (const StageRecord &r : state.records)
    put("posterior_stage" + std::to_string(r.stage) + ".csv", posterior_csv(r.posterior));
  put("scores.csv", scores_csv(state.records));
  put("loss_trace.csv", loss_trace_csv(state.records, cfg.scenario == Scenario::Parametric));
  put("eki_trajectories.csv", eki_csv(state.records));
  put("stages.csv", stages_csv(state.records));
  if (cfg.scenario == Scenario::Structural) {
    save_net_csv((dir / "net_params.csv").string(), DiscrepancyNet::from_params(state.params), cfg.model.net_gain);
    files.push_back("net_params.csv");
  } else {
    CsvTable t("theta_s");
    t.row(state.params.at(0));
    put("theta_s.csv", t.str());
  }
  return files;
}

struct ManifestInfo {
  std::string command;
  std::string status = "ok";
  std::vector<std::string> files;
  std::vector<double> stage_seconds;
  double total_seconds = 0.0;
};

inline void write_manifest(const fs::path &dir, const CampaignConfig &cfg, const ManifestInfo &info) {
  json seeds = {{"master", cfg.seed},
                {"net_init", derive_seed(cfg.seed, "net-init")},
                {"noise", "derived per (stage, design location)"}};
  json eki = json::array(), eig = json::array();
  for (int i = 1; i <= cfg.stages; ++i) {
    eki.push_back(derive_seed(cfg.seed, "eki", static_cast<std::uint64_t>(i)));
    eig.push_back(derive_seed(cfg.seed, "eig", static_cast<std::uint64_t>(i)));
  }
  seeds["eki_per_stage"] = eki;
  seeds["eig_per_stage"] = eig;
  const json manifest = {{"command", info.command},
                         {"status", info.status},
                         {"config", to_json(cfg)},
                         {"config_hash", config_hash(cfg)},
                         {"seeds", seeds},
                         {"files", info.files},
                         {"timings", {{"stage_seconds", info.stage_seconds}, {"total_seconds", info.total_seconds}}}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

} // namespace activebed

#endif // ACTIVEBED_ARTIFACTS_HPP
