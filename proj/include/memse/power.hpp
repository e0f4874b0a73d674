#pragma once

#include <array>
#include <vector>

#include <Eigen/LU>

#include "memse/crossbar.hpp"
#include "memse/moments.hpp"

namespace memse {

// Expected power of one crossbar layer. Memristor power is E[G X^2] with
// zero-mean noise, i.e. |g| (x^2 + gamma^2) per device; TIA power per half is
// E[(sum_i G_i X_i)^2].
struct LayerPower {
  double mem = 0.0;
  double tia_plus = 0.0;
  double tia_minus = 0.0;

  double total() const { return mem + tia_plus + tia_minus; }
};

struct PowerBreakdown {
  std::vector<LayerPower> layers;

  double total() const {
    double t = 0.0;
    for (const auto& l : layers) t += l.total();
    return t;
  }
};

struct ColumnPower {
  Vector mem;
  Vector tia_plus;
  Vector tia_minus;

  Vector total() const { return mem + tia_plus + tia_minus; }
};

inline ColumnPower column_power(const ConductancePair& pair, const MomentState& in, const HalfMoments& h,
                                const CrossbarConfig& cfg) {
  check_cols(pair.g_plus, in.size(), "layer power");
  if (h.mu_plus.size() != pair.g_plus.rows()) throw ShapeError("half moments do not match layer");
  const Vector second = second_moment(in);
  const double r2 = cfg.r * cfg.r;
  ColumnPower p;
  p.mem = multiply_abs(pair.g_plus, second) + multiply_abs(pair.g_minus, second);
  p.tia_plus = (h.rho2_plus + h.mu_plus.cwiseAbs2()) / r2;
  p.tia_minus = (h.rho2_minus + h.mu_minus.cwiseAbs2()) / r2;
  return p;
}

inline LayerPower layer_power(const ConductancePair& pair, const MomentState& in, const HalfMoments& h,
                              const CrossbarConfig& cfg) {
  const auto p = column_power(pair, in, h, cfg);
  return {p.mem.sum(), p.tia_plus.sum(), p.tia_minus.sum()};
}

// Per-column coefficients of E[P_j](c) = c^2 H1 + c H2 + H3.
struct PowerPoly {
  Vector h1;
  Vector h2;
  Vector h3;

  Vector evaluate(double c) const { return c * c * h1 + c * h2 + h3; }
};

// Column power of `stage` at scaling factor c with input moments held fixed;
// G_max follows c, sigma_v does not.
inline Vector column_power_at(const LinearStage& stage, const MomentState& in, CrossbarConfig cfg, double c) {
  cfg.g_max = c * stage.w_max;
  const auto pair = map_and_quantize(stage.weights, cfg, stage.w_max);
  return column_power(pair, in, half_moments(in, pair, cfg), cfg).total();
}

// Probes around the layer's configured scaling factor.
inline std::array<double, 3> default_probes(const LinearStage& stage, const CrossbarConfig& cfg) {
  const double c = cfg.scale(stage.w_max);
  return {0.5 * c, c, 2.0 * c};
}

inline PowerPoly power_poly(const LinearStage& stage, const MomentState& in, const CrossbarConfig& cfg,
                            std::array<double, 3> probes) {
  Eigen::Matrix3d a;
  for (int i = 0; i < 3; ++i) {
    const double c = probes[static_cast<std::size_t>(i)];
    if (!(c > 0.0)) throw ConfigError("probe scaling factors must be positive");
    a.row(i) << c * c, c, 1.0;
  }
  Eigen::FullPivLU<Eigen::Matrix3d> lu(a);
  if (lu.rank() < 3) throw NumericError("singular probe system (duplicate probes)");
  Matrix rhs(3, stage.weights.rows());
  for (int i = 0; i < 3; ++i) rhs.row(i) = column_power_at(stage, in, cfg, probes[static_cast<std::size_t>(i)]).transpose();
  const Matrix sol = lu.solve(rhs);
  return {sol.row(0).transpose(), sol.row(1).transpose(), sol.row(2).transpose()};
}

inline PowerPoly power_poly(const LinearStage& stage, const MomentState& in, const CrossbarConfig& cfg) {
  return power_poly(stage, in, cfg, default_probes(stage, cfg));
}

}  // namespace memse
