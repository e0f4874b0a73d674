#pragma once

#include <algorithm>
#include <utility>
#include <vector>

#include "memse/activation.hpp"
#include "memse/crossbar.hpp"
#include "memse/linalg.hpp"
#include "memse/netmodel.hpp"

namespace memse {

// Mean and covariance of a layer's (noisy) activations, plus the noiseless
// reference they are compared against.
//
// The covariance is held in one of three forms: zero (deterministic input,
// both `cov` and `diag` empty), diagonal (`diag` only) or dense (`cov`).
// Layers fed by a deterministic vector stay diagonal, which keeps the first
// conv stage of a CNN from materializing an L x L matrix.
struct MomentState {
  Vector mean;
  Matrix cov;
  Vector ref;
  Shape shape;
  Vector diag;

  static MomentState deterministic(const Vector& x, Shape shape) { return {x, Matrix(), x, shape, Vector()}; }
  static MomentState deterministic(const Vector& x) { return deterministic(x, Shape{x.size(), 1, 1}); }

  Index size() const { return mean.size(); }
  bool has_cov() const { return cov.size() != 0 || diag.size() != 0; }
  bool is_dense() const { return cov.size() != 0; }
  Vector variance() const {
    if (is_dense()) return cov.diagonal();
    return diag.size() != 0 ? diag : Vector::Zero(mean.size());
  }
  Matrix dense_cov() const {
    if (is_dense()) return cov;
    Matrix m = Matrix::Zero(mean.size(), mean.size());
    if (diag.size() != 0) m.diagonal() = diag;
    return m;
  }
};

// Moments of the two unscaled crossbar halves r * sum_i G+_ij X_i and
// r * sum_i G-_ij X_i, needed for TIA power.
struct HalfMoments {
  Vector mu_plus;
  Vector rho2_plus;
  Vector mu_minus;
  Vector rho2_minus;
};

// Per-column moments of a linear stage. The full output covariance is the
// `cov` of the MomentState returned alongside; its diagonal equals rho2.
struct LayerMoments {
  Vector mu;
  Vector rho2;
  HalfMoments halves;
};

struct Diagnostics {
  std::size_t negative_variance_clamps = 0;

  Diagnostics& operator+=(const Diagnostics& o) {
    negative_variance_clamps += o.negative_variance_clamps;
    return *this;
  }
};

namespace detail {

// sum_k var_k * s_col(k) per row, for a per-entry variance list.
inline Vector noise_term(const SparseRows& pattern, const std::vector<double>& var, const Vector& second) {
  Vector y(pattern.rows());
  for (Index r = 0; r < pattern.rows(); ++r) {
    double s = 0.0;
    for (Index k = pattern.row_begin(r); k < pattern.row_end(r); ++k)
      s += var[static_cast<std::size_t>(k)] * second[pattern.col_at(k)];
    y[r] = s;
  }
  return y;
}

inline Vector device_variance_term(const SparseRows& pattern, const std::vector<double>& sigma, const Vector& second) {
  std::vector<double> var(sigma.size());
  for (std::size_t k = 0; k < sigma.size(); ++k) var[k] = sigma[k] * sigma[k];
  return noise_term(pattern, var, second);
}

}  // namespace detail

inline Vector second_moment(const MomentState& in) {
  Vector second = in.mean.cwiseAbs2();
  if (in.has_cov()) second += in.variance();
  return second;
}

// Unscaled half moments; each device carries its own programming noise.
inline HalfMoments half_moments(const MomentState& in, const ConductancePair& pair, const CrossbarConfig& cfg) {
  check_cols(pair.g_plus, in.size(), "half moments");
  const double r2 = cfg.r * cfg.r;
  const Vector second = second_moment(in);
  HalfMoments h;
  auto half = [&](const SparseRows& g, const std::vector<double>& sigma, Vector& mu, Vector& rho2) {
    mu = cfg.r * multiply(g, in.mean);
    rho2 = r2 * detail::device_variance_term(g, sigma, second);
    if (in.is_dense()) rho2 += r2 * row_quadratic(g, in.cov);
    else if (in.has_cov()) rho2 += r2 * row_quadratic(g, in.diag);
  };
  half(pair.g_plus, pair.sigma_plus, h.mu_plus, h.rho2_plus);
  half(pair.g_minus, pair.sigma_minus, h.mu_minus, h.rho2_minus);
  return h;
}

// Mean, variance and covariance after a crossbar stage and the 1/c rescale:
//   mu_j      = r sum_i (w_ij + dq_ij) x_i
//   rho_j^2   = r^2 sum_i [ s_ij^2 / c^2 (x_i^2 + gamma_i^2) ] + r^2 (w+dq)_j Gamma (w+dq)_j^T
//   rho_jj'   = r^2 (w+dq)_j Gamma (w+dq)_j'^T
// where s_ij^2 is the conductance noise variance charged to the weight.
// The reference propagates through the exact weights (no dq, no noise).
inline std::pair<MomentState, LayerMoments> linear_moments(const MomentState& in, const LinearStage& stage,
                                                           const ConductancePair& pair, const CrossbarConfig& cfg) {
  const SparseRows& w = stage.weights;
  check_cols(w, in.size(), "linear moments");
  if (pair.g_plus.rows() != w.rows() || pair.g_plus.cols() != w.cols())
    throw ShapeError("conductance pair does not match stage weights");
  const double r = cfg.r;
  const double c = pair.c;

  const SparseRows eff = pair.effective();
  const Vector second = second_moment(in);

  LayerMoments lm;
  lm.mu = r * multiply(eff, in.mean);
  const Vector noise =
      (r * r / (c * c)) * detail::noise_term(w, pair.weight_noise_variance(cfg.noise_model), second);

  MomentState out;
  out.shape = stage.out_shape;
  out.mean = lm.mu;
  out.ref = r * multiply(w, in.ref);
  if (stage.bias.size() != 0) {
    out.mean += stage.bias;
    out.ref += stage.bias;
  }
  if (in.has_cov()) {
    out.cov = (r * r) * (in.is_dense() ? sandwich(eff, in.cov) : sandwich(eff, in.diag));
    out.cov.diagonal() += noise;
  } else {
    out.diag = noise;
  }
  lm.rho2 = out.variance();

  lm.halves = half_moments(in, pair, cfg);
  return {std::move(out), std::move(lm)};
}

// Second-order Taylor moments through an elementwise activation:
//   E[f(Z)]        ~ f(mu) + 1/2 f''(mu) rho^2
//   Var[f(Z)]      ~ 1/2 g''(mu) rho^2 - f(mu) f''(mu) rho^2,  g = f^2
//   Cov[f(Zj),f(Zk)] ~ f'(mu_j) f'(mu_k) rho_jk
// Negative variances from the truncated expansion are clamped to zero.
inline MomentState activation_moments(const MomentState& in, ActivationKind kind, Diagnostics* diag = nullptr) {
  if (kind == ActivationKind::identity) return in;
  MomentState out;
  out.shape = in.shape;
  out.ref = apply_activation(kind, in.ref);
  const Index n = in.size();
  out.mean.resize(n);
  if (!in.has_cov()) {
    for (Index j = 0; j < n; ++j) out.mean[j] = apply(kind, in.mean[j]);
    return out;
  }
  Vector d1(n), var(n);
  for (Index j = 0; j < n; ++j) {
    const auto v = evaluate(kind, in.mean[j]);
    const double rho2 = in.is_dense() ? in.cov(j, j) : in.diag[j];
    const double g2 = 2.0 * (v.d1 * v.d1 + v.f * v.d2);  // (f^2)''
    out.mean[j] = v.f + 0.5 * v.d2 * rho2;
    double vj = 0.5 * g2 * rho2 - v.f * v.d2 * rho2;
    if (vj < 0.0) {
      vj = 0.0;
      if (diag) ++diag->negative_variance_clamps;
    }
    var[j] = vj;
    d1[j] = v.d1;
  }
  if (in.is_dense()) {
    out.cov.resize(n, n);
    for (Index k = 0; k < n; ++k) {
      for (Index j = 0; j < k; ++j) out.cov(j, k) = out.cov(k, j) = (d1[j] * d1[k]) * in.cov(j, k);
      out.cov(k, k) = var[k];
    }
  } else {
    out.diag = var;
  }
  return out;
}

// Average pooling is linear, so the moments transform exactly.
inline MomentState pool_moments(const MomentState& in, const PoolStage& pool) {
  check_cols(pool.map, in.size(), "pool moments");
  MomentState out;
  out.shape = pool.out_shape;
  out.mean = multiply(pool.map, in.mean);
  out.ref = multiply(pool.map, in.ref);
  if (in.is_dense()) out.cov = sandwich(pool.map, in.cov);
  else if (in.has_cov()) {
    if (disjoint_rows(pool.map)) out.diag = row_quadratic(pool.map, in.diag);
    else out.cov = sandwich(pool.map, in.diag);
  }
  return out;
}

struct MseSummary {
  Vector per_output;
  double mean = 0.0;
  double max = 0.0;
};

inline MseSummary mse(const MomentState& s) {
  MseSummary m;
  m.per_output = s.variance() + (s.mean - s.ref).cwiseAbs2();
  if (m.per_output.size() > 0) {
    m.mean = m.per_output.mean();
    m.max = m.per_output.maxCoeff();
  }
  return m;
}

}  // namespace memse
