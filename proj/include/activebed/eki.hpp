#ifndef ACTIVEBED_EKI_HPP
#define ACTIVEBED_EKI_HPP

// Ensemble Kalman inversion and the Gaussian-ensemble KL indicator used to
// judge whether a (design, measurement) pair is informative for the
// discrepancy parameters.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "activebed/common.hpp"

namespace activebed {

/// J parameter vectors stored as the columns of a d x J matrix.
struct Ensemble {
  Eigen::MatrixXd members;

  std::size_t size() const { return static_cast<std::size_t>(members.cols()); }
  std::size_t dimension() const { return static_cast<std::size_t>(members.rows()); }

  Eigen::VectorXd mean() const { return members.rowwise().mean(); }

  Eigen::MatrixXd covariance() const {
    const Eigen::MatrixXd centered = members.colwise() - mean();
    return centered * centered.transpose() / static_cast<double>(members.cols() - 1);
  }

  void validate() const {
    if (members.cols() < 2) throw std::invalid_argument("ensemble needs at least 2 members");
    if (!members.allFinite()) throw NumericalFault("ensemble contains non-finite members");
  }
};

using ForwardMap = std::function<Eigen::VectorXd(const Eigen::VectorXd &)>;

enum class ThresholdRule { Relative, Absolute };

struct EkiConfig {
  int ensemble_size = 100;
  int iterations = 10;
  double regularization = 1e-8;
  double perturbation_std = 0.1;
  ThresholdRule rule = ThresholdRule::Relative;
  double relative_threshold = 1.0;
  double absolute_threshold = 0.5;

  void validate() const {
    if (ensemble_size < 2) throw ConfigError("eki.ensemble_size must be >= 2");
    if (iterations < 1) throw ConfigError("eki.iterations must be >= 1");
    if (!(regularization > 0.0)) throw ConfigError("eki.regularization must be > 0");
    if (!(perturbation_std > 0.0)) throw ConfigError("eki.perturbation_std must be > 0");
    if (!(relative_threshold >= 0.0) || !(absolute_threshold >= 0.0))
      throw ConfigError("eki thresholds must be >= 0");
  }
};

/// Evaluates the forward map on every member (columns of the result).
inline Eigen::MatrixXd evaluate_members(const Ensemble &ens, const ForwardMap &forward) {
  Eigen::MatrixXd g;
  for (Eigen::Index j = 0; j < ens.members.cols(); ++j) {
    const Eigen::VectorXd gj = forward(ens.members.col(j));
    if (!gj.allFinite()) throw NumericalFault("non-finite forward output for ensemble member " + std::to_string(j));
    if (j == 0) g.resize(gj.size(), ens.members.cols());
    g.col(j) = gj;
  }
  return g;
}

/// One deterministic EKI update (no perturbed observations):
/// theta_j += C_tg (C_gg + Gamma)^{-1} (y - g_j).
inline Ensemble eki_step(const Ensemble &ens, const ForwardMap &forward, const Eigen::VectorXd &y,
                         const Eigen::MatrixXd &gamma) {
  ens.validate();
  const Eigen::MatrixXd g = evaluate_members(ens, forward);
  const double scale = 1.0 / static_cast<double>(ens.members.cols() - 1);
  const Eigen::MatrixXd dtheta = ens.members.colwise() - ens.mean();
  const Eigen::MatrixXd dg = g.colwise() - g.rowwise().mean();
  const Eigen::MatrixXd c_tg = dtheta * dg.transpose() * scale;
  const Eigen::MatrixXd c_gg = dg * dg.transpose() * scale;
  const Eigen::MatrixXd innovation = (-g).colwise() + y;
  const Eigen::MatrixXd solved = (c_gg + gamma).ldlt().solve(innovation);
  return Ensemble{ens.members + c_tg * solved};
}

/// Closed-form KL divergence between Gaussian fits of two ensembles, with
/// the updated ensemble in the inverted / numerator role:
///   0.5 [tr(S_K^{-1} S_0) - d + ln(det S_K / det S_0) + dm^T S_K^{-1} dm].
/// Both covariances are regularized by eps * I.
inline double ensemble_kld(const Ensemble &updated, const Ensemble &initial, double eps = 1e-8) {
  if (updated.dimension() != initial.dimension())
    throw std::invalid_argument("ensemble_kld: dimension mismatch");
  if (updated.members.cols() == initial.members.cols() && updated.members == initial.members) return 0.0;
  const Eigen::Index d = static_cast<Eigen::Index>(updated.dimension());
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);
  const Eigen::MatrixXd s_k = updated.covariance() + eps * eye;
  const Eigen::MatrixXd s_0 = initial.covariance() + eps * eye;
  const Eigen::LLT<Eigen::MatrixXd> llt_k(s_k);
  const Eigen::LLT<Eigen::MatrixXd> llt_0(s_0);
  if (llt_k.info() != Eigen::Success || llt_0.info() != Eigen::Success)
    throw NumericalFault("ensemble covariance is not positive definite after regularization");
  auto logdet = [](const Eigen::LLT<Eigen::MatrixXd> &llt) {
    return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  };
  const Eigen::VectorXd dm = updated.mean() - initial.mean();
  const double trace = llt_k.solve(s_0).trace();
  const double quad = dm.dot(llt_k.solve(dm));
  const double kld = 0.5 * (trace - static_cast<double>(d) + logdet(llt_k) - logdet(llt_0) + quad);
  return std::max(kld, 0.0);
}

/// Current parameters plus iid N(0, std^2) perturbations, one column per member.
inline Ensemble perturbed_ensemble(std::span<const double> center, int members, double std_dev, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, std_dev);
  Ensemble ens{Eigen::MatrixXd(static_cast<Eigen::Index>(center.size()), members)};
  for (int j = 0; j < members; ++j)
    for (std::size_t i = 0; i < center.size(); ++i)
      ens.members(static_cast<Eigen::Index>(i), j) = center[i] + normal(rng);
  return ens;
}

struct IndicatorResult {
  std::vector<double> kld; // after each EKI iteration
  double final_kld() const { return kld.empty() ? 0.0 : kld.back(); }
};

/// Runs K EKI iterations from a perturbed ensemble around `params` against
/// the data `y`, recording the ensemble KLD to the initial ensemble.
inline IndicatorResult informativeness(std::span<const double> params, const ForwardMap &forward,
                                       const Eigen::VectorXd &y, const Eigen::MatrixXd &gamma, const EkiConfig &cfg,
                                       std::uint64_t seed) {
  cfg.validate();
  const Ensemble initial = perturbed_ensemble(params, cfg.ensemble_size, cfg.perturbation_std, seed);
  Ensemble current = initial;
  IndicatorResult out;
  for (int k = 0; k < cfg.iterations; ++k) {
    current = eki_step(current, forward, y, gamma);
    out.kld.push_back(ensemble_kld(current, initial, cfg.regularization));
  }
  return out;
}

inline double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of empty set");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  double m = values[mid];
  if (values.size() % 2 == 0) {
    m = 0.5 * (m + *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid)));
  }
  return m;
}

/// Accept when the final KLD clears the threshold: relative to the median over
/// the stage's candidates when those are available, absolute otherwise.
inline bool accept_indicator(double final_kld, const EkiConfig &cfg, std::span<const double> candidate_klds = {}) {
  if (cfg.rule == ThresholdRule::Relative && !candidate_klds.empty())
    return final_kld >= cfg.relative_threshold * median({candidate_klds.begin(), candidate_klds.end()});
  return final_kld >= cfg.absolute_threshold;
}

} // namespace activebed

#endif // ACTIVEBED_EKI_HPP
