#ifndef ACTIVEBED_FORWARD_MODELS_HPP
#define ACTIVEBED_FORWARD_MODELS_HPP

#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "activebed/common.hpp"
#include "activebed/grid_pde.hpp"

namespace activebed {

struct SourceParams {
  double theta_x = 0.0;
  double theta_y = 0.0;
  double theta_h = 0.05;
  double theta_s = 2.0;

  Point location() const { return {theta_x, theta_y}; }
};

/// Gaussian bump: theta_s / (2 pi theta_h^2) * exp(-r^2 / (2 theta_h^2)).
inline double eval_true_source(Point z, const SourceParams &p) {
  const double dx = p.theta_x - z.x;
  const double dy = p.theta_y - z.y;
  const double h2 = p.theta_h * p.theta_h;
  return p.theta_s / (2.0 * std::numbers::pi * h2) * std::exp(-(dx * dx + dy * dy) / (2.0 * h2));
}

/// d(eval_true_source)/d(theta_s).
inline double true_source_strength_derivative(Point z, const SourceParams &p) {
  SourceParams unit = p;
  unit.theta_s = 1.0;
  return eval_true_source(z, unit);
}

/// Misspecified rational source: 3 theta_s / (pi (r^2 / (2 theta_h^2) + 2 theta_h^2)).
inline double eval_modeled_source(Point z, const SourceParams &p) {
  const double dx = p.theta_x - z.x;
  const double dy = p.theta_y - z.y;
  const double h2 = p.theta_h * p.theta_h;
  return 3.0 * p.theta_s / (std::numbers::pi * ((dx * dx + dy * dy) / (2.0 * h2) + 2.0 * h2));
}

/// Fully connected 4-6-1 network with a tanh hidden layer and linear output.
///
/// Parameter layout (37 values): W1 row-major (6x4), b1 (6), w2 (6), b2 (1).
/// Inputs are (z_x, z_y, theta_x, theta_y).
struct DiscrepancyNet {
  static constexpr int inputs = 4;
  static constexpr int hidden = 6;
  static constexpr int parameter_count = inputs * hidden + hidden + hidden + 1;
  static_assert(parameter_count == 37);

  static constexpr int w1_offset = 0;
  static constexpr int b1_offset = inputs * hidden;
  static constexpr int w2_offset = b1_offset + hidden;
  static constexpr int b2_offset = w2_offset + hidden;

  std::vector<double> params = std::vector<double>(parameter_count, 0.0);

  static DiscrepancyNet zeros() { return DiscrepancyNet{}; }

  static DiscrepancyNet from_params(std::span<const double> values) {
    if (values.size() != parameter_count)
      throw std::invalid_argument("discrepancy net expects exactly 37 parameters");
    return DiscrepancyNet{std::vector<double>(values.begin(), values.end())};
  }

  /// Uniform initialization in [-range, range].
  static DiscrepancyNet random(std::uint64_t seed, double range = 0.1) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-range, range);
    DiscrepancyNet net;
    for (double &p : net.params) p = dist(rng);
    return net;
  }
};

using NetInput = std::array<double, DiscrepancyNet::inputs>;

/// Raw (unscaled) network output.
inline double net_forward(const DiscrepancyNet &net, const NetInput &x) {
  const double *p = net.params.data();
  double out = p[DiscrepancyNet::b2_offset];
  for (int k = 0; k < DiscrepancyNet::hidden; ++k) {
    double a = p[DiscrepancyNet::b1_offset + k];
    for (int i = 0; i < DiscrepancyNet::inputs; ++i) a += p[DiscrepancyNet::w1_offset + k * 4 + i] * x[i];
    out += p[DiscrepancyNet::w2_offset + k] * std::tanh(a);
  }
  return out;
}

/// d(net_forward)/d(params), written into `grad` (length 37). Returns the output.
inline double net_param_gradient(const DiscrepancyNet &net, const NetInput &x, std::span<double> grad) {
  const double *p = net.params.data();
  double out = p[DiscrepancyNet::b2_offset];
  for (int k = 0; k < DiscrepancyNet::hidden; ++k) {
    double a = p[DiscrepancyNet::b1_offset + k];
    for (int i = 0; i < DiscrepancyNet::inputs; ++i) a += p[DiscrepancyNet::w1_offset + k * 4 + i] * x[i];
    const double act = std::tanh(a);
    const double w2 = p[DiscrepancyNet::w2_offset + k];
    out += w2 * act;
    const double back = w2 * (1.0 - act * act);
    for (int i = 0; i < DiscrepancyNet::inputs; ++i) grad[DiscrepancyNet::w1_offset + k * 4 + i] = back * x[i];
    grad[DiscrepancyNet::b1_offset + k] = back;
    grad[DiscrepancyNet::w2_offset + k] = act;
  }
  grad[DiscrepancyNet::b2_offset] = 1.0;
  return out;
}

inline std::vector<double> net_param_gradient(const DiscrepancyNet &net, const NetInput &x) {
  std::vector<double> g(DiscrepancyNet::parameter_count);
  net_param_gradient(net, x, g);
  return g;
}

// Serialized as one header line plus 37 comma-separated numbers.
inline void save_net_csv(const std::string &path, const DiscrepancyNet &net, double gain) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "# layers=4,6,1 activation=tanh gain=" << std::setprecision(17) << gain << "\n";
  for (std::size_t i = 0; i < net.params.size(); ++i) out << (i ? "," : "") << net.params[i];
  out << "\n";
}

inline DiscrepancyNet load_net_csv(const std::string &path, double *gain = nullptr) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string header, body;
  std::getline(in, header);
  if (header.rfind("# layers=4,6,1", 0) != 0) throw std::runtime_error(path + ": not a 4-6-1 network file");
  if (gain) {
    const auto pos = header.find("gain=");
    *gain = pos == std::string::npos ? 1.0 : std::stod(header.substr(pos + 5));
  }
  std::getline(in, body);
  std::vector<double> values;
  std::stringstream ss(body);
  for (std::string cell; std::getline(ss, cell, ',');) values.push_back(std::stod(cell));
  return DiscrepancyNet::from_params(values);
}

enum class SourceKind { TrueExponential, ModeledRational, NetworkAugmented, ParametricStrength };

/// A source model together with the parameters it is evaluated at.
///
/// The discrepancy parameters of a source are its trainable part: theta_s for
/// ParametricStrength, the 37 network weights for NetworkAugmented, none
/// otherwise. `net_location` is the (theta_x, theta_y) fed to the network.
struct SourceTerm {
  SourceKind kind = SourceKind::TrueExponential;
  SourceParams params;
  DiscrepancyNet net;
  double gain = 100.0;
  Point net_location;

  static SourceTerm true_exponential(const SourceParams &p) { return {SourceKind::TrueExponential, p, {}, 1.0, {}}; }
  static SourceTerm parametric(const SourceParams &p) { return {SourceKind::ParametricStrength, p, {}, 1.0, {}}; }
  static SourceTerm rational(const SourceParams &p) { return {SourceKind::ModeledRational, p, {}, 1.0, {}}; }
  static SourceTerm augmented(const SourceParams &p, DiscrepancyNet net, double gain, Point net_location) {
    return {SourceKind::NetworkAugmented, p, std::move(net), gain, net_location};
  }

  std::size_t discrepancy_size() const {
    switch (kind) {
    case SourceKind::ParametricStrength: return 1;
    case SourceKind::NetworkAugmented: return DiscrepancyNet::parameter_count;
    default: return 0;
    }
  }

  std::vector<double> discrepancy_params() const {
    switch (kind) {
    case SourceKind::ParametricStrength: return {params.theta_s};
    case SourceKind::NetworkAugmented: return net.params;
    default: return {};
    }
  }

  SourceTerm with_discrepancy(std::span<const double> values) const {
    if (values.size() != discrepancy_size())
      throw std::invalid_argument("discrepancy parameter count mismatch");
    SourceTerm out = *this;
    if (kind == SourceKind::ParametricStrength) out.params.theta_s = values[0];
    if (kind == SourceKind::NetworkAugmented) out.net.params.assign(values.begin(), values.end());
    return out;
  }

  SourceTerm at_location(Point location) const {
    SourceTerm out = *this;
    out.params.theta_x = location.x;
    out.params.theta_y = location.y;
    return out;
  }

  /// Physics part only (network contribution excluded).
  double physics(Point z) const {
    return kind == SourceKind::ModeledRational || kind == SourceKind::NetworkAugmented
               ? eval_modeled_source(z, params)
               : eval_true_source(z, params);
  }

  double correction(Point z) const {
    if (kind != SourceKind::NetworkAugmented) return 0.0;
    return gain * net_forward(net, {z.x, z.y, net_location.x, net_location.y});
  }

  double operator()(Point z) const { return physics(z) + correction(z); }

  /// dS/d(discrepancy params) at z into `grad`; returns S(z).
  double discrepancy_gradient(Point z, std::span<double> grad) const {
    switch (kind) {
    case SourceKind::ParametricStrength: {
      const double unit = true_source_strength_derivative(z, params);
      grad[0] = unit;
      return unit * params.theta_s;
    }
    case SourceKind::NetworkAugmented: {
      const double raw = net_param_gradient(net, {z.x, z.y, net_location.x, net_location.y}, grad);
      for (double &g : grad) g *= gain;
      return eval_modeled_source(z, params) + gain * raw;
    }
    default: return (*this)(z);
    }
  }
};

/// Samples a source on every grid node; throws on a non-finite value.
inline std::vector<double> sample_source(const GridSpec &grid, const SourceTerm &source) {
  std::vector<double> field(grid.size());
  for (int iy = 0; iy < grid.n_points; ++iy)
    for (int ix = 0; ix < grid.n_points; ++ix) {
      const Point z = grid.node(ix, iy);
      const double s = source(z);
      if (!std::isfinite(s))
        throw NumericalFault("non-finite source value at node (" + std::to_string(ix) + ", " + std::to_string(iy) +
                             ") z=(" + std::to_string(z.x) + ", " + std::to_string(z.y) + ")");
      field[grid.index(ix, iy)] = s;
    }
  return field;
}

/// sum_z w(z) S(z) over the grid.
inline double contract_source(const GridSpec &grid, std::span<const double> weights, const SourceTerm &source) {
  double acc = 0.0;
  for (int iy = 0; iy < grid.n_points; ++iy)
    for (int ix = 0; ix < grid.n_points; ++ix) {
      const double w = weights[grid.index(ix, iy)];
      if (w != 0.0) acc += w * source(grid.node(ix, iy));
    }
  return acc;
}

/// sum_z w(z) NN(z, location) for the raw network over the grid nodes.
///
/// Each hidden unit's activation is tanh(a z_x + b z_y + c) on a lattice, so it
/// factors through tanh(p + q) = (tp + tq) / (1 + tp tq) with one tanh per
/// row and column. Units where both factors can approach +-1 (where the
/// identity loses accuracy) are evaluated directly.
inline double contract_network(const GridSpec &grid, std::span<const double> weights, const DiscrepancyNet &net,
                               Point location) {
  const int n = grid.n_points;
  const double *p = net.params.data();
  std::vector<double> tx(n), ty(n);
  double total_w = 0.0;
  for (double w : weights) total_w += w;
  double acc = p[DiscrepancyNet::b2_offset] * total_w;
  for (int k = 0; k < DiscrepancyNet::hidden; ++k) {
    const double *w1 = p + DiscrepancyNet::w1_offset + k * DiscrepancyNet::inputs;
    const double c = p[DiscrepancyNet::b1_offset + k] + w1[2] * location.x + w1[3] * location.y;
    double max_x = 0.0, max_y = 0.0;
    for (int i = 0; i < n; ++i) {
      const double z = grid.coord(i);
      tx[i] = std::tanh(w1[0] * z + c);
      ty[i] = std::tanh(w1[1] * z);
      max_x = std::max(max_x, std::abs(tx[i]));
      max_y = std::max(max_y, std::abs(ty[i]));
    }
    double unit = 0.0;
    if (max_x * max_y <= 0.81) {
      for (int iy = 0; iy < n; ++iy) {
        const double *row = weights.data() + grid.index(0, iy);
        const double b = ty[iy];
        double r = 0.0;
        for (int ix = 0; ix < n; ++ix) r += row[ix] * ((tx[ix] + b) / (1.0 + tx[ix] * b));
        unit += r;
      }
    } else {
      for (int iy = 0; iy < n; ++iy)
        for (int ix = 0; ix < n; ++ix) {
          const double w = weights[grid.index(ix, iy)];
          if (w != 0.0) unit += w * std::tanh(w1[0] * grid.coord(ix) + w1[1] * grid.coord(iy) + c);
        }
    }
    acc += p[DiscrepancyNet::w2_offset + k] * unit;
  }
  return acc;
}

/// sum_z w(z) dS/dp(z); writes into `grad` and returns sum_z w(z) S(z).
inline double contract_source_gradient(const GridSpec &grid, std::span<const double> weights,
                                       const SourceTerm &source, std::span<double> grad) {
  std::fill(grad.begin(), grad.end(), 0.0);
  std::vector<double> local(source.discrepancy_size());
  double acc = 0.0;
  for (int iy = 0; iy < grid.n_points; ++iy)
    for (int ix = 0; ix < grid.n_points; ++ix) {
      const double w = weights[grid.index(ix, iy)];
      if (w == 0.0) continue;
      acc += w * source.discrepancy_gradient(grid.node(ix, iy), local);
      for (std::size_t k = 0; k < local.size(); ++k) grad[k] += w * local[k];
    }
  return acc;
}

} // namespace activebed

#endif // ACTIVEBED_FORWARD_MODELS_HPP
