#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "memse/crossbar.hpp"
#include "memse/io.hpp"
#include "memse/netmodel.hpp"
#include "memse/parallel.hpp"
#include "memse/predict.hpp"
#include "memse/rng.hpp"

namespace memse {

struct TrialPlan {
  std::size_t trials = 200;
  std::uint64_t master_seed = 0;
  bool clip_conductances = false;
  bool record_moments = false;
  // Program once per trial and run the whole batch on the same draw, instead
  // of redrawing conductances for every (trial, input).
  bool freeze_per_trial = false;
  unsigned threads = 1;
};

// Realized power of one layer for one draw. mem_model uses signed G X^2 (the
// quantity the analytic model takes the expectation of); mem_physical uses |G|.
struct TrialPower {
  double mem_model = 0.0;
  double mem_physical = 0.0;
  double tia_plus = 0.0;
  double tia_minus = 0.0;

  double model_total() const { return mem_model + tia_plus + tia_minus; }
};

namespace detail {

// One crossbar stage with conductances drawn on the fly, in the same device
// order as sample_conductances.
inline Vector noisy_linear(const LinearStage& st, const ConductancePair& pair, const CrossbarConfig& cfg,
                           const Vector& x, std::uint64_t stream, bool clip, TrialPower* power) {
  Engine eng(stream);
  Normal normal(0.0, 1.0);
  const SparseRows& gp = pair.g_plus;
  const auto gpv = gp.values();
  const auto gmv = pair.g_minus.values();
  const auto wv = pair.weights.values();
  const auto dqv = pair.dq.values();
  Vector z(gp.rows());
  TrialPower tp;
  for (Index row = 0; row < gp.rows(); ++row) {
    double s = 0.0, sp = 0.0, sm = 0.0;
    for (Index k = gp.row_begin(row); k < gp.row_end(row); ++k) {
      const auto ku = static_cast<std::size_t>(k);
      double a = gpv[ku] + pair.sigma_plus[ku] * normal(eng);
      double b = gmv[ku] + pair.sigma_minus[ku] * normal(eng);
      if (clip) {
        a = std::clamp(a, 0.0, pair.g_max);
        b = std::clamp(b, 0.0, pair.g_max);
      }
      const double xi = x[gp.col_at(k)];
      // (G+ - G-)/c split as (W + dq) + deviation/c, exact when noise is off
      s += (wv[ku] + dqv[ku] + ((a - gpv[ku]) - (b - gmv[ku])) / pair.c) * xi;
      sp += a * xi;
      sm += b * xi;
      if (power) {
        const double x2 = xi * xi;
        tp.mem_model += (a + b) * x2;
        tp.mem_physical += (std::abs(a) + std::abs(b)) * x2;
      }
    }
    // Z = (Z+ - Z-) / c with Z+- = r sum G+- x
    z[row] = cfg.r * s;
    tp.tia_plus += sp * sp;
    tp.tia_minus += sm * sm;
  }
  if (st.bias.size() != 0) z += st.bias;
  if (power) *power = tp;
  return z;
}

}  // namespace detail

// Noiseless output of the ideal crossbar network (exact weights, TIA gain r).
inline Vector ideal_forward(const ProgrammedNetwork& prog, const Vector& x) {
  const auto& net = prog.network();
  if (x.size() != net.input_size()) throw ShapeError("input length does not match network");
  Vector cur = x;
  std::size_t layer = 0;
  for (const auto& st : net.stages) {
    if (const auto* lin = std::get_if<LinearStage>(&st)) {
      Vector y = prog.config(layer++).r * multiply(lin->weights, cur);
      if (lin->bias.size() != 0) y += lin->bias;
      cur = std::move(y);
    } else {
      cur = forward_stage(st, cur);
    }
  }
  return cur;
}

// One noisy inference. Layer l draws from stream derive_seed(seed, {l}).
inline Vector noisy_forward(const ProgrammedNetwork& prog, const Vector& x, std::uint64_t seed, bool clip = false,
                            std::vector<TrialPower>* power = nullptr) {
  const auto& net = prog.network();
  if (x.size() != net.input_size()) throw ShapeError("input length does not match network");
  if (power) power->assign(prog.layer_count(), TrialPower{});
  Vector cur = x;
  std::size_t layer = 0;
  for (const auto& st : net.stages) {
    if (const auto* lin = std::get_if<LinearStage>(&st)) {
      cur = detail::noisy_linear(*lin, prog.pair(layer), prog.config(layer), cur, derive_seed(seed, {layer}), clip,
                                 power ? &(*power)[layer] : nullptr);
      ++layer;
    } else {
      cur = forward_stage(st, cur);
    }
  }
  return cur;
}

struct McLayerPower {
  double mem_model = 0.0;
  double mem_physical = 0.0;
  double tia_plus = 0.0;
  double tia_minus = 0.0;

  double model_total() const { return mem_model + tia_plus + tia_minus; }
};

struct InputEstimate {
  Vector mse;     // per output: (1/T) sum_t (out_t - ref)^2
  Vector mse_se;  // standard error of each entry
  Vector ref;
  double mean_mse = 0.0;
  double max_mse = 0.0;
  // Only with record_moments.
  Vector mean;
  Vector mean_se;
  Matrix cov;
  Matrix cov_se;
  std::vector<McLayerPower> power;
  double power_total = 0.0;     // model power (signed G X^2)
  double power_total_se = 0.0;
  std::optional<double> accuracy;  // fraction of trials whose argmax hits the label
};

struct McEstimate {
  std::vector<InputEstimate> inputs;
  std::size_t trials = 0;
  bool clip = false;

  double mean_of(double InputEstimate::*field) const {
    double s = 0.0;
    for (const auto& e : inputs) s += e.*field;
    return inputs.empty() ? 0.0 : s / static_cast<double>(inputs.size());
  }
  double mean_mse() const { return mean_of(&InputEstimate::mean_mse); }
  double mean_max_mse() const { return mean_of(&InputEstimate::max_mse); }
  double power_total() const { return mean_of(&InputEstimate::power_total); }

  std::optional<double> accuracy() const {
    if (inputs.empty() || !inputs.front().accuracy) return std::nullopt;
    double s = 0.0;
    for (const auto& e : inputs) s += *e.accuracy;
    return s / static_cast<double>(inputs.size());
  }
};

inline Index argmax(const Vector& v) {
  Index best = 0;
  for (Index i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

namespace detail {

constexpr std::size_t kTrialBlock = 32;

struct BlockSums {
  Vector err2;
  Vector err4;
  Vector out;
  std::vector<McLayerPower> power;
  double total = 0.0;
  double total2 = 0.0;
  std::size_t hits = 0;
};

}  // namespace detail

// Work is split into fixed (input, 32-trial block) items and reduced in a
// fixed order, so results are bit-identical for any thread count.
inline McEstimate estimate(const ProgrammedNetwork& prog, const std::vector<Vector>& inputs, const TrialPlan& plan,
                           const std::vector<int>* labels = nullptr) {
  if (plan.trials < 1) throw ConfigError("trial count must be >= 1");
  if (labels && labels->size() != inputs.size()) throw ShapeError("label count does not match batch size");
  const std::size_t n_in = inputs.size();
  const std::size_t blocks = (plan.trials + detail::kTrialBlock - 1) / detail::kTrialBlock;
  const Index m = prog.network().output_size();
  const std::size_t layers = prog.layer_count();

  std::vector<Vector> refs(n_in);
  for (std::size_t b = 0; b < n_in; ++b) refs[b] = ideal_forward(prog, inputs[b]);

  std::vector<detail::BlockSums> sums(n_in * blocks);
  std::vector<Matrix> raw;
  if (plan.record_moments) {
    raw.resize(n_in);
    for (auto& r : raw) r.resize(m, static_cast<Index>(plan.trials));
  }

  parallel_for(n_in * blocks, plan.threads, [&](std::size_t item) {
    const std::size_t b = item / blocks;
    const std::size_t blk = item % blocks;
    auto& s = sums[item];
    s.err2 = Vector::Zero(m);
    s.err4 = Vector::Zero(m);
    s.out = Vector::Zero(m);
    s.power.assign(layers, McLayerPower{});
    std::vector<TrialPower> tp;
    const std::size_t t_end = std::min(plan.trials, (blk + 1) * detail::kTrialBlock);
    for (std::size_t t = blk * detail::kTrialBlock; t < t_end; ++t) {
      const std::uint64_t seed = plan.freeze_per_trial ? derive_seed(plan.master_seed, {t})
                                                       : derive_seed(plan.master_seed, {t, b});
      const Vector out = noisy_forward(prog, inputs[b], seed, plan.clip_conductances, &tp);
      const Vector e2 = (out - refs[b]).cwiseAbs2();
      s.err2 += e2;
      s.err4 += e2.cwiseAbs2();
      s.out += out;
      double total = 0.0;
      for (std::size_t l = 0; l < layers; ++l) {
        s.power[l].mem_model += tp[l].mem_model;
        s.power[l].mem_physical += tp[l].mem_physical;
        s.power[l].tia_plus += tp[l].tia_plus;
        s.power[l].tia_minus += tp[l].tia_minus;
        total += tp[l].model_total();
      }
      s.total += total;
      s.total2 += total * total;
      if (labels && argmax(out) == (*labels)[b]) ++s.hits;
      if (plan.record_moments) raw[b].col(static_cast<Index>(t)) = out;
    }
  });

  McEstimate est;
  est.trials = plan.trials;
  est.clip = plan.clip_conductances;
  est.inputs.resize(n_in);
  const double T = static_cast<double>(plan.trials);
  for (std::size_t b = 0; b < n_in; ++b) {
    Vector err2 = Vector::Zero(m), err4 = Vector::Zero(m);
    std::vector<McLayerPower> pw(layers);
    double total = 0.0, total2 = 0.0;
    std::size_t hits = 0;
    for (std::size_t blk = 0; blk < blocks; ++blk) {
      const auto& s = sums[b * blocks + blk];
      err2 += s.err2;
      err4 += s.err4;
      for (std::size_t l = 0; l < layers; ++l) {
        pw[l].mem_model += s.power[l].mem_model;
        pw[l].mem_physical += s.power[l].mem_physical;
        pw[l].tia_plus += s.power[l].tia_plus;
        pw[l].tia_minus += s.power[l].tia_minus;
      }
      total += s.total;
      total2 += s.total2;
      hits += s.hits;
    }
    auto& e = est.inputs[b];
    e.ref = refs[b];
    e.mse = err2 / T;
    const double dof = std::max(T - 1.0, 1.0);
    e.mse_se = ((err4 / T - e.mse.cwiseAbs2()).cwiseMax(0.0) * (T / dof) / T).cwiseSqrt();
    e.mean_mse = e.mse.mean();
    e.max_mse = e.mse.maxCoeff();
    for (auto& p : pw) {
      p.mem_model /= T;
      p.mem_physical /= T;
      p.tia_plus /= T;
      p.tia_minus /= T;
    }
    e.power = std::move(pw);
    e.power_total = total / T;
    e.power_total_se = std::sqrt(std::max(total2 / T - e.power_total * e.power_total, 0.0) * (T / dof) / T);
    if (labels) e.accuracy = static_cast<double>(hits) / T;
    if (plan.record_moments) {
      const Matrix& x = raw[b];
      e.mean = x.rowwise().mean();
      const Matrix centered = x.colwise() - e.mean;
      e.cov = centered * centered.transpose() / dof;
      e.mean_se = (e.cov.diagonal() / T).cwiseSqrt();
      e.cov_se.resize(m, m);
      for (Index i = 0; i < m; ++i)
        for (Index j = 0; j < m; ++j) {
          const auto prod = centered.row(i).cwiseProduct(centered.row(j));
          const double mu = prod.mean();
          const double v = (prod.array() - mu).square().sum() / dof;
          e.cov_se(i, j) = std::sqrt(v / T);
        }
    }
  }
  return est;
}

struct AccuracyPair {
  double noisy = 0.0;
  double clean = 0.0;
  double noisy_se = 0.0;
};

// Noisy vs clean top-1 accuracy; one conductance draw per (trial, input).
inline AccuracyPair accuracy(const ProgrammedNetwork& prog, const InputBatch& batch, const TrialPlan& plan) {
  if (!batch.labels) throw ConfigError("accuracy needs labels");
  const auto& labels = *batch.labels;
  if (labels.size() != batch.size()) throw ShapeError("label count does not match batch size");
  AccuracyPair acc;
  for (std::size_t b = 0; b < batch.size(); ++b)
    if (argmax(ideal_forward(prog, batch.samples[b])) == labels[b]) acc.clean += 1.0;
  acc.clean /= static_cast<double>(batch.size());
  const auto est = estimate(prog, batch.samples, plan, &labels);
  acc.noisy = *est.accuracy();
  // Per-input hit rates are independent across inputs; binomial error of the pooled rate.
  const double n = static_cast<double>(batch.size() * plan.trials);
  acc.noisy_se = std::sqrt(acc.noisy * (1.0 - acc.noisy) / n);
  return acc;
}

}  // namespace memse
