#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <set>

#include "memse/linalg.hpp"
#include "memse/parallel.hpp"
#include "memse/rng.hpp"

using namespace memse;

namespace {

Matrix random_sparse(Index m, Index n, double density, std::uint64_t seed) {
  Engine eng(seed);
  Normal normal;
  Matrix a = Matrix::Zero(m, n);
  for (Index i = 0; i < a.size(); ++i)
    if (static_cast<double>(eng() % 1000) < density * 1000) a.data()[i] = normal(eng);
  return a;
}

Matrix random_spd(Index n, std::uint64_t seed) {
  Engine eng(seed);
  Normal normal;
  Matrix b(n, n);
  for (Index i = 0; i < b.size(); ++i) b.data()[i] = normal(eng);
  return b * b.transpose() / static_cast<double>(n);
}

}  // namespace

TEST(SparseRows, FullRoundTrip) {
  const Matrix a = random_sparse(5, 7, 0.5, 1);
  const auto s = SparseRows::full(a);
  EXPECT_EQ(s.nnz(), 35);
  EXPECT_EQ(s.to_dense(), a);
  EXPECT_EQ(s.max_abs(), a.cwiseAbs().maxCoeff());
}

TEST(SparseRows, MultiplyMatchesDense) {
  const Matrix a = random_sparse(6, 9, 0.4, 2);
  const auto s = SparseRows::full(a);
  Vector x = Vector::LinSpaced(9, -1, 2);
  EXPECT_LE((multiply(s, x) - a * x).norm(), 1e-12);
  EXPECT_LE((multiply_abs(s, x) - a.cwiseAbs() * x).norm(), 1e-12);
  EXPECT_THROW(multiply(s, Vector::Ones(3)), ShapeError);
}

TEST(Sandwich, DenseAndDiagonalMatchEigen) {
  const Matrix a = random_sparse(8, 12, 0.5, 3);
  const auto s = SparseRows::full(a);
  const Matrix c = random_spd(12, 4);
  const Matrix want = a * c * a.transpose();
  const Matrix got = sandwich(s, c);
  EXPECT_LE((got - want).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(got, got.transpose());
  const Vector d = c.diagonal();
  const Matrix want_d = a * d.asDiagonal() * a.transpose();
  EXPECT_LE((sandwich(s, d) - want_d).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((sandwich(s, Matrix(d.asDiagonal())) - want_d).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((row_quadratic(s, c) - want.diagonal()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((row_quadratic(s, d) - want_d.diagonal()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Sandwich, DisjointRows) {
  auto p = std::make_shared<SparsePattern>();
  p->rows = 2;
  p->cols = 4;
  p->col = {0, 1, 2, 3};
  p->row_ptr = {0, 2, 4};
  EXPECT_TRUE(disjoint_rows(SparseRows(p, {1, 1, 1, 1})));
  // a dense matrix shares every column
  EXPECT_FALSE(disjoint_rows(SparseRows::full(Matrix::Ones(2, 4))));
}

TEST(Rng, DeriveSeedDistinctAndStable) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t t = 0; t < 100; ++t)
    for (std::uint64_t i = 0; i < 100; ++i) seen.insert(derive_seed(7, {t, i}));
  EXPECT_EQ(seen.size(), 10000u);
  EXPECT_EQ(derive_seed(7, {1, 2}), derive_seed(7, {1, 2}));
  EXPECT_NE(derive_seed(7, {1, 2}), derive_seed(7, {2, 1}));
  EXPECT_NE(derive_seed(7, {1}), derive_seed(8, {1}));
}

TEST(Parallel, CoversAllIndicesOnce) {
  for (unsigned threads : {1u, 3u, 8u}) {
    std::vector<std::atomic<int>> hits(1000);
    parallel_for(hits.size(), threads, [&](std::size_t i) { hits[i]++; });
    for (auto& h : hits) EXPECT_EQ(h.load(), 1);
  }
}

TEST(Parallel, PropagatesExceptions) {
  EXPECT_THROW(parallel_for(100, 4,
                            [](std::size_t i) {
                              if (i == 37) throw std::runtime_error("boom");
                            }),
               std::runtime_error);
}

TEST(Parallel, ResolveThreads) {
  EXPECT_EQ(resolve_threads(3), 3u);
  ::setenv("MEMSE_THREADS", "5", 1);
  EXPECT_EQ(resolve_threads(0), 5u);
  ::unsetenv("MEMSE_THREADS");
  EXPECT_GE(resolve_threads(0), 1u);
}
