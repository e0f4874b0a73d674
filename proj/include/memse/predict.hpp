#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include <Eigen/LU>

#include "memse/crossbar.hpp"
#include "memse/moments.hpp"
#include "memse/netmodel.hpp"
#include "memse/power.hpp"

namespace memse {

// One config per linear stage; a single config is broadcast to all stages.
inline std::vector<CrossbarConfig> broadcast_configs(const LoweredNetwork& net, std::span<const CrossbarConfig> cfgs) {
  const std::size_t n = net.linear_count();
  if (cfgs.size() == 1) return std::vector<CrossbarConfig>(n, cfgs[0]);
  if (cfgs.size() != n)
    throw ConfigError("expected 1 or " + std::to_string(n) + " crossbar configs, got " + std::to_string(cfgs.size()));
  return {cfgs.begin(), cfgs.end()};
}

// A lowered network with its conductances mapped for a given set of configs.
// Holds a reference to the network, which must outlive it.
class ProgrammedNetwork {
 public:
  ProgrammedNetwork(const LoweredNetwork& net, std::span<const CrossbarConfig> cfgs)
      : net_(&net), linear_(net.linear_stage_indices()), cfgs_(broadcast_configs(net, cfgs)) {
    pairs_.reserve(linear_.size());
    for (std::size_t i = 0; i < linear_.size(); ++i) {
      const auto& st = linear(i);
      pairs_.push_back(map_and_quantize(st.weights, cfgs_[i], st.w_max));
    }
  }

  ProgrammedNetwork(const LoweredNetwork& net, const CrossbarConfig& cfg)
      : ProgrammedNetwork(net, std::span<const CrossbarConfig>(&cfg, 1)) {}

  const LoweredNetwork& network() const { return *net_; }
  std::size_t layer_count() const { return linear_.size(); }
  std::size_t stage_of_layer(std::size_t layer) const { return linear_[layer]; }
  const LinearStage& linear(std::size_t layer) const { return std::get<LinearStage>(net_->stages[linear_[layer]]); }
  const CrossbarConfig& config(std::size_t layer) const { return cfgs_[layer]; }
  const std::vector<CrossbarConfig>& configs() const { return cfgs_; }
  const ConductancePair& pair(std::size_t layer) const { return pairs_[layer]; }

 private:
  const LoweredNetwork* net_;
  std::vector<std::size_t> linear_;
  std::vector<CrossbarConfig> cfgs_;
  std::vector<ConductancePair> pairs_;
};

// Per-output coefficients of MSE(c) = F1/c^4 + F2/c^2 + F3 for one layer
// with its input moments held fixed. F3 is the c -> infinity floor.
struct MsePoly {
  Vector f1;
  Vector f2;
  Vector f3;

  Vector evaluate(double c) const { return f1 / (c * c * c * c) + f2 / (c * c) + f3; }
};

struct PredictOptions {
  bool keep_states = false;
  bool coefficients = false;
};

struct Prediction {
  std::vector<MomentState> states;  // after every stage, if kept
  std::vector<LayerMoments> layers;
  PowerBreakdown power;
  std::vector<MsePoly> coefficients;  // per linear layer, if requested
  MomentState output;
  MseSummary mse;
  Diagnostics diagnostics;
};

// End (exclusive) of the group formed by the linear stage at `stage` and the
// activation/pool stages that follow it.
inline std::size_t group_end(const LoweredNetwork& net, std::size_t stage) {
  std::size_t e = stage + 1;
  while (e < net.stages.size() && !std::holds_alternative<LinearStage>(net.stages[e])) ++e;
  return e;
}

inline MomentState propagate_tail(const LoweredNetwork& net, std::size_t begin, std::size_t end, MomentState s,
                                  Diagnostics* diag) {
  for (std::size_t i = begin; i < end; ++i) {
    if (const auto* a = std::get_if<ActivationStage>(&net.stages[i]))
      s = activation_moments(s, a->kind, diag);
    else if (const auto* p = std::get_if<PoolStage>(&net.stages[i]))
      s = pool_moments(s, *p);
    else
      throw ShapeError("unexpected linear stage inside a layer group");
  }
  return s;
}

// Group MSE at scaling factor c (G_max = c W_max; sigma_v unchanged).
inline Vector group_mse_at(const LoweredNetwork& net, std::size_t stage, const MomentState& in, CrossbarConfig cfg,
                           double c) {
  const auto& st = std::get<LinearStage>(net.stages.at(stage));
  cfg.g_max = c * st.w_max;
  const auto pair = map_and_quantize(st.weights, cfg, st.w_max);
  auto [s, lm] = linear_moments(in, st, pair, cfg);
  (void)lm;
  return mse(propagate_tail(net, stage + 1, group_end(net, stage), std::move(s), nullptr)).per_output;
}

inline std::array<double, 3> default_mse_probes(const LinearStage& stage, const CrossbarConfig& cfg) {
  const double c = cfg.scale(stage.w_max);
  return {0.5 * c, c, 2.0 * c};
}

// Fits the three coefficients from three probe evaluations (a Vandermonde
// system in 1/c^4, 1/c^2, 1).
inline MsePoly mse_poly_coeffs(const LoweredNetwork& net, std::size_t stage, const MomentState& in,
                               const CrossbarConfig& cfg, std::array<double, 3> probes) {
  Eigen::Matrix3d a;
  for (int i = 0; i < 3; ++i) {
    const double c = probes[static_cast<std::size_t>(i)];
    if (!(c > 0.0)) throw ConfigError("probe scaling factors must be positive");
    a.row(i) << 1.0 / (c * c * c * c), 1.0 / (c * c), 1.0;
  }
  Eigen::FullPivLU<Eigen::Matrix3d> lu(a);
  if (lu.rank() < 3) throw NumericError("singular probe system (duplicate probes)");
  std::array<Vector, 3> vals;
  for (std::size_t i = 0; i < 3; ++i) vals[i] = group_mse_at(net, stage, in, cfg, probes[i]);
  Matrix rhs(3, vals[0].size());
  for (int i = 0; i < 3; ++i) rhs.row(i) = vals[static_cast<std::size_t>(i)].transpose();
  const Matrix sol = lu.solve(rhs);
  return {sol.row(0).transpose(), sol.row(1).transpose(), sol.row(2).transpose()};
}

inline Prediction predict_network(const ProgrammedNetwork& prog, const Vector& x, const PredictOptions& opts = {}) {
  const auto& net = prog.network();
  if (x.size() != net.input_size())
    throw ShapeError("input length " + std::to_string(x.size()) + " != " + std::to_string(net.input_size()));
  Prediction p;
  MomentState state = MomentState::deterministic(x, net.input_shape);
  std::size_t layer = 0;
  for (std::size_t i = 0; i < net.stages.size(); ++i) {
    const auto& stage = net.stages[i];
    if (const auto* lin = std::get_if<LinearStage>(&stage)) {
      const auto& cfg = prog.config(layer);
      const auto& pair = prog.pair(layer);
      if (opts.coefficients) p.coefficients.push_back(mse_poly_coeffs(net, i, state, cfg, default_mse_probes(*lin, cfg)));
      auto [next, lm] = linear_moments(state, *lin, pair, cfg);
      p.power.layers.push_back(layer_power(pair, state, lm.halves, cfg));
      p.layers.push_back(std::move(lm));
      state = std::move(next);
      ++layer;
    } else if (const auto* a = std::get_if<ActivationStage>(&stage)) {
      state = activation_moments(state, a->kind, &p.diagnostics);
    } else {
      state = pool_moments(state, std::get<PoolStage>(stage));
    }
    if (opts.keep_states) p.states.push_back(state);
  }
  p.mse = mse(state);
  p.output = std::move(state);
  return p;
}

inline Prediction predict_network(const LoweredNetwork& net, std::span<const CrossbarConfig> cfgs, const Vector& x,
                                  const PredictOptions& opts = {}) {
  return predict_network(ProgrammedNetwork(net, cfgs), x, opts);
}

inline PowerBreakdown network_power(const ProgrammedNetwork& prog, const Vector& x) {
  return predict_network(prog, x).power;
}

}  // namespace memse
