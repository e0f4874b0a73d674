#pragma once

#include <cfenv>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "memse/error.hpp"
#include "memse/linalg.hpp"
#include "memse/rng.hpp"

namespace memse {

// Which devices the analytic model charges with programming noise.
// pair: both devices of a +/- pair (variance 2 sigma_v^2 per weight).
// single: one device per weight, the literal single-G reading.
enum class NoiseModel { pair, single };

struct CrossbarConfig {
  double g_max = 1.0;      // siemens
  Index levels = 128;      // N: grid is {0, delta, ..., N delta = g_max}
  double sigma_v = 0.0;    // programming noise std, siemens
  double r = 1.0;          // TIA feedback resistance, ohms
  bool quantize = true;
  NoiseModel noise_model = NoiseModel::pair;
  std::vector<double> sigma_table;  // optional per-level std (N+1 entries), overrides sigma_v

  double delta() const { return g_max / static_cast<double>(levels); }
  double scale(double w_max) const { return g_max / w_max; }

  double device_sigma(double level) const {
    if (sigma_table.empty()) return sigma_v;
    const auto idx = static_cast<std::size_t>(std::clamp<double>(std::nearbyint(level), 0.0, double(levels)));
    return sigma_table[idx];
  }

  void validate() const {
    if (!(g_max > 0.0) || !std::isfinite(g_max)) throw ConfigError("G_max must be positive");
    if (levels <= 0) throw ConfigError("N must be a positive integer");
    if (!(sigma_v >= 0.0) || !std::isfinite(sigma_v)) throw ConfigError("sigma_v must be >= 0");
    if (!(r > 0.0) || !std::isfinite(r)) throw ConfigError("r must be positive");
    if (!sigma_table.empty()) {
      if (static_cast<Index>(sigma_table.size()) != levels + 1)
        throw ConfigError("sigma table needs N+1 entries");
      for (double s : sigma_table)
        if (!(s >= 0.0)) throw ConfigError("sigma table entries must be >= 0");
    }
  }
};

// Quantized conductances for one layer. g_plus/g_minus share the weight
// pattern; dq is in the weight domain: (g_plus - g_minus)/c = W + dq.
struct ConductancePair {
  SparseRows g_plus;
  SparseRows g_minus;
  SparseRows dq;
  std::vector<double> sigma_plus;   // per-device programming noise std
  std::vector<double> sigma_minus;
  double c = 1.0;
  double g_max = 1.0;
  SparseRows weights;  // the exact W being programmed

  // W + dq = (g_plus - g_minus) / c, the weights the crossbar actually
  // realizes. Formed as W + dq so that an unquantized pair reproduces W
  // bit-for-bit.
  SparseRows effective() const {
    std::vector<double> v(static_cast<std::size_t>(g_plus.nnz()));
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = weights.values()[k] + dq.values()[k];
    return g_plus.with_values(std::move(v));
  }

  // Conductance-domain noise variance charged to each weight.
  std::vector<double> weight_noise_variance(NoiseModel model) const {
    std::vector<double> v(sigma_plus.size());
    for (std::size_t k = 0; k < v.size(); ++k) {
      const double sp = sigma_plus[k], sm = sigma_minus[k];
      if (model == NoiseModel::pair)
        v[k] = sp * sp + sm * sm;
      else
        v[k] = g_minus.values()[k] > 0.0 ? sm * sm : sp * sp;
    }
    return v;
  }
};

inline std::pair<Matrix, Matrix> split_weights(const Matrix& w) {
  return {w.cwiseMax(0.0), (-w).cwiseMax(0.0)};
}

inline ConductancePair map_and_quantize(const SparseRows& w, const CrossbarConfig& cfg, double w_max) {
  if (!(w_max > 0.0) || !std::isfinite(w_max)) throw ConfigError("W_max must be positive");
  cfg.validate();
  const double c = cfg.scale(w_max);
  const double n = static_cast<double>(cfg.levels);
  const auto count = static_cast<std::size_t>(w.nnz());
  std::vector<double> gp(count), gm(count), dq(count), sp(count), sm(count);
  const int saved_mode = std::fegetround();
  std::fesetround(FE_TONEAREST);  // nearbyint: round half to even
  for (std::size_t k = 0; k < count; ++k) {
    const double v = w.values()[k];
    if (std::abs(v) > w_max * (1.0 + 1e-12)) {
      std::fesetround(saved_mode);
      throw ConfigError("weight magnitude exceeds W_max");
    }
    const double mag = std::min(std::abs(v), w_max);
    double level, g;
    if (cfg.quantize) {
      // Quantize on |w| N / W_max so the weight-domain error is identical for every G_max.
      level = std::nearbyint(mag * n / w_max);
      g = cfg.g_max * (level / n);
    } else {
      g = c * mag;
      level = g / cfg.delta();
    }
    if (v >= 0.0) {
      gp[k] = g;
      gm[k] = 0.0;
      sp[k] = cfg.device_sigma(level);
      sm[k] = cfg.device_sigma(0.0);
    } else {
      gp[k] = 0.0;
      gm[k] = g;
      sp[k] = cfg.device_sigma(0.0);
      sm[k] = cfg.device_sigma(level);
    }
    dq[k] = cfg.quantize ? (gp[k] - gm[k]) / c - v : 0.0;
  }
  std::fesetround(saved_mode);
  return ConductancePair{w.with_values(std::move(gp)), w.with_values(std::move(gm)), w.with_values(std::move(dq)),
                         std::move(sp), std::move(sm), c, cfg.g_max, w};
}

inline ConductancePair map_and_quantize(const Matrix& w, const CrossbarConfig& cfg, double w_max) {
  return map_and_quantize(SparseRows::full(w), cfg, w_max);
}

// Realized conductances: quantized value plus an independent normal draw per
// device, drawn in device order (plus device first). No clipping unless asked.
inline std::pair<SparseRows, SparseRows> sample_conductances(const ConductancePair& pair, std::uint64_t seed,
                                                             bool clip = false) {
  Engine eng(seed);
  Normal normal(0.0, 1.0);
  const auto count = static_cast<std::size_t>(pair.g_plus.nnz());
  std::vector<double> gp(count), gm(count);
  for (std::size_t k = 0; k < count; ++k) {
    gp[k] = pair.g_plus.values()[k] + pair.sigma_plus[k] * normal(eng);
    gm[k] = pair.g_minus.values()[k] + pair.sigma_minus[k] * normal(eng);
    if (clip) {
      gp[k] = std::clamp(gp[k], 0.0, pair.g_max);
      gm[k] = std::clamp(gm[k], 0.0, pair.g_max);
    }
  }
  return {pair.g_plus.with_values(std::move(gp)), pair.g_minus.with_values(std::move(gm))};
}

}  // namespace memse
