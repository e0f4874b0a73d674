#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "memse/memse.hpp"

using namespace memse;

namespace {

Matrix row(std::initializer_list<double> v) {
  Matrix m(1, static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) m(0, i++) = x;
  return m;
}

CrossbarConfig cfg(double g_max = 1.0, Index n = 128, double sigma = 0.0) {
  CrossbarConfig c;
  c.g_max = g_max;
  c.levels = n;
  c.sigma_v = sigma;
  return c;
}

}  // namespace

TEST(Split, SignSplit) {
  const auto [p, m] = split_weights(row({1, -2}));
  EXPECT_EQ(p, row({1, 0}));
  EXPECT_EQ(m, row({0, 2}));
}

TEST(Split, AllPositiveAndZeros) {
  const Matrix w = row({0.5, 2, 3});
  auto [p, m] = split_weights(w);
  EXPECT_EQ(p, w);
  EXPECT_EQ(m, Matrix::Zero(1, 3));
  std::tie(p, m) = split_weights(Matrix::Zero(2, 2));
  EXPECT_EQ(p, Matrix::Zero(2, 2));
  EXPECT_EQ(m, Matrix::Zero(2, 2));
}

TEST(Quantize, EndpointOnGrid) {
  const auto pair = map_and_quantize(row({1.0, -1.0}), cfg(1.0), 1.0);
  EXPECT_EQ(pair.g_plus.value_at(0), 1.0);
  EXPECT_EQ(pair.g_minus.value_at(1), 1.0);
  EXPECT_EQ(pair.dq.value_at(0), 0.0);
  EXPECT_EQ(pair.dq.value_at(1), 0.0);
}

TEST(Quantize, ZeroWeight) {
  const auto pair = map_and_quantize(row({0.0, 1.0}), cfg(), 1.0);
  EXPECT_EQ(pair.g_plus.value_at(0), 0.0);
  EXPECT_EQ(pair.g_minus.value_at(0), 0.0);
  EXPECT_EQ(pair.dq.value_at(0), 0.0);
}

TEST(Quantize, HandArithmetic) {
  // 0.3 * 128 = 38.4 -> 38; 38/128 = 0.296875; dq = -0.003125
  const auto pair = map_and_quantize(row({0.3, 1.0}), cfg(), 1.0);
  EXPECT_DOUBLE_EQ(pair.g_plus.value_at(0), 0.296875);
  EXPECT_NEAR(pair.dq.value_at(0), -0.003125, 1e-15);
  EXPECT_EQ(pair.c, 1.0);
}

TEST(Quantize, TiesToEven) {
  // 2.5/4 and 3.5/4 of W_max with N=4: levels 2.5 -> 2, 3.5 -> 4
  const auto pair = map_and_quantize(row({2.5 / 4, 3.5 / 4, 1.0}), cfg(1.0, 4), 1.0);
  EXPECT_EQ(pair.g_plus.value_at(0), 0.5);
  EXPECT_EQ(pair.g_plus.value_at(1), 1.0);
}

TEST(Quantize, ErrorBoundReconstructionAndGmaxInvariance) {
  Engine eng(5);
  Normal normal;
  Matrix w(6, 7);
  for (Index i = 0; i < w.size(); ++i) w.data()[i] = normal(eng);
  const double w_max = w.cwiseAbs().maxCoeff();
  const auto base = map_and_quantize(w, cfg(1.0, 16), w_max);
  for (double g : {1e-4, 0.37, 1.0, 55.0}) {
    const auto pair = map_and_quantize(w, cfg(g, 16), w_max);
    EXPECT_DOUBLE_EQ(pair.c, g / w_max);
    for (Index k = 0; k < pair.dq.nnz(); ++k) {
      const double gp = pair.g_plus.value_at(k), gm = pair.g_minus.value_at(k);
      EXPECT_TRUE(gp == 0.0 || gm == 0.0);
      EXPECT_GE(gp, 0.0);
      EXPECT_LE(gp, g);
      EXPECT_GE(gm, 0.0);
      EXPECT_LE(gm, g);
      // integer multiples of delta
      EXPECT_NEAR(gp / (g / 16), std::round(gp / (g / 16)), 1e-9);
      EXPECT_LE(std::abs(pair.dq.value_at(k)), w_max / 32 * (1 + 1e-12));
      EXPECT_NEAR((gp - gm) / pair.c - w(k / w.cols(), k % w.cols()), pair.dq.value_at(k), 1e-12 * w_max);
      EXPECT_NEAR(pair.dq.value_at(k), base.dq.value_at(k), 1e-12 * w_max);
    }
  }
}

TEST(Quantize, DisabledIsExact) {
  auto c = cfg(2.0);
  c.quantize = false;
  const auto pair = map_and_quantize(row({0.3, -0.7, 1.0}), c, 1.0);
  EXPECT_DOUBLE_EQ(pair.g_plus.value_at(0), 0.6);
  EXPECT_DOUBLE_EQ(pair.g_minus.value_at(1), 1.4);
  for (Index k = 0; k < 3; ++k) EXPECT_EQ(pair.dq.value_at(k), 0.0);
}

TEST(Quantize, RejectsBadInputs) {
  EXPECT_THROW(map_and_quantize(row({1.0}), cfg(), 0.0), ConfigError);
  EXPECT_THROW(map_and_quantize(row({2.0}), cfg(), 1.0), ConfigError);
  EXPECT_THROW(map_and_quantize(row({1.0}), cfg(-1.0), 1.0), ConfigError);
  auto bad = cfg();
  bad.sigma_table = {0.1, 0.2};
  EXPECT_THROW(map_and_quantize(row({1.0}), bad, 1.0), ConfigError);
}

TEST(Quantize, SigmaTablePerLevel) {
  auto c = cfg(1.0, 4);
  c.sigma_table = {0.0, 0.1, 0.2, 0.3, 0.4};
  const auto pair = map_and_quantize(row({0.5, -1.0}), c, 1.0);
  EXPECT_EQ(pair.sigma_plus[0], 0.2);
  EXPECT_EQ(pair.sigma_minus[0], 0.0);
  EXPECT_EQ(pair.sigma_plus[1], 0.0);
  EXPECT_EQ(pair.sigma_minus[1], 0.4);
}

TEST(Sample, ZeroNoiseReturnsPair) {
  const auto pair = map_and_quantize(row({0.3, -0.5}), cfg(), 1.0);
  const auto [gp, gm] = sample_conductances(pair, 42);
  EXPECT_TRUE(gp == pair.g_plus);
  EXPECT_TRUE(gm == pair.g_minus);
}

TEST(Sample, Deterministic) {
  const auto pair = map_and_quantize(row({0.3, -0.5, 0.9}), cfg(1.0, 128, 0.05), 1.0);
  const auto a = sample_conductances(pair, 7);
  const auto b = sample_conductances(pair, 7);
  const auto c = sample_conductances(pair, 8);
  EXPECT_TRUE(a.first == b.first && a.second == b.second);
  EXPECT_FALSE(a.first == c.first);
}

TEST(Sample, Clip) {
  const auto pair = map_and_quantize(row({1.0, 0.0}), cfg(1.0, 128, 0.5), 1.0);
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto [gp, gm] = sample_conductances(pair, s, true);
    for (Index k = 0; k < 2; ++k) {
      EXPECT_GE(gp.value_at(k), 0.0);
      EXPECT_LE(gp.value_at(k), 1.0);
      EXPECT_GE(gm.value_at(k), 0.0);
    }
  }
}

TEST(Sample, SingleCellStatistics) {
  // 1e6 draws: mean within 4 sigma/sqrt(n), std within 1%.
  const auto pair = map_and_quantize(row({0.3}), cfg(1.0, 128, 0.01), 1.0);
  const int n = 1'000'000;
  double s1 = 0.0, s2 = 0.0;
  Engine eng(99);
  for (int t = 0; t < n; ++t) {
    const auto [gp, gm] = sample_conductances(pair, eng());
    const double d = gp.value_at(0) - pair.g_plus.value_at(0);
    s1 += d;
    s2 += d * d;
  }
  const double mean = s1 / n;
  const double sd = std::sqrt(s2 / n - mean * mean);
  EXPECT_LE(std::abs(mean), 4 * 0.01 / std::sqrt(double(n)));
  EXPECT_NEAR(sd, 0.01, 0.01 * 0.01);
}

TEST(Config, Validation) {
  EXPECT_NO_THROW(cfg().validate());
  auto c = cfg();
  c.levels = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = cfg();
  c.r = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = cfg();
  c.sigma_v = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_DOUBLE_EQ(cfg(2.0, 4).delta(), 0.5);
}
