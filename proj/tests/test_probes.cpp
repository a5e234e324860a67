#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "glab/error.hpp"
#include "glab/probes.hpp"
#include "glab/rng.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace glab;
using glab::testing::random_tensor;

namespace {

std::vector<double> random_values(Rng& rng, std::size_t n, bool ties) {
  std::vector<double> v(n);
  for (auto& x : v) x = ties ? static_cast<double>(rng.index(5)) : rng.normal();
  return v;
}

// Two Gaussian blobs per class centre, well separated.
void blobs(Rng& rng, std::size_t per_class, std::size_t n_classes, std::size_t d, double spread, Tensor& X,
           std::vector<int>& y) {
  X = Tensor(Shape{per_class * n_classes, d});
  y.clear();
  for (std::size_t c = 0; c < n_classes; ++c)
    for (std::size_t i = 0; i < per_class; ++i) {
      const std::size_t r = c * per_class + i;
      for (std::size_t j = 0; j < d; ++j) X(r, j) = (j % n_classes == c ? 3.0 : 0.0) + spread * rng.normal();
      y.push_back(static_cast<int>(c) * 10);  // non-contiguous labels
    }
}

}  // namespace

TEST(Metrics, SpearmanMatchesBruteForce) {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const bool ties = trial % 2 == 1;
    const std::size_t n = 3 + rng.index(30);
    auto a = random_values(rng, n, ties), b = random_values(rng, n, ties);
    a[0] = -100, a[1] = 100, b[0] = -100, b[1] = 100;  // avoid constant vectors
    EXPECT_NEAR(spearman(a, b), oracle::spearman(a, b), 1e-12);
    EXPECT_EQ(average_ranks(a), oracle::ranks(a));
  }
}

TEST(Metrics, SpearmanNoTiesClosedForm) {
  Rng rng(2);
  const auto a = random_values(rng, 25, false), b = random_values(rng, 25, false);
  const auto ra = oracle::ranks(a), rb = oracle::ranks(b);
  double d2 = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d2 += (ra[i] - rb[i]) * (ra[i] - rb[i]);
  EXPECT_NEAR(spearman(a, b), 1.0 - 6.0 * d2 / (25.0 * (625.0 - 1.0)), 1e-12);
}

TEST(Metrics, SpearmanContracts) {
  EXPECT_THROW(spearman({1, 2}, {1, 2}), ContractError);
  EXPECT_THROW(spearman({1, 2, 3}, {1, 2}), ContractError);
  EXPECT_THROW(spearman({1, 1, 1}, {1, 2, 3}), NumericError);
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3}, {10, 20, 30}), 1.0);
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3}, {3, 2, 1}), -1.0);
}

TEST(Metrics, MapAtKMatchesBruteForce) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.index(40);
    const auto s = random_values(rng, n, trial % 2 == 1);
    auto perm = rng.permutation(n);
    perm.resize(1 + rng.index(n));
    EXPECT_DOUBLE_EQ(map_at_k(s, perm), oracle::map_at_k(s, perm));
  }
  EXPECT_DOUBLE_EQ(map_at_k({0.9, 0.1, 0.8, 0.2}, {0, 2}), 1.0);
  EXPECT_DOUBLE_EQ(map_at_k({0.9, 0.1, 0.8, 0.2}, {1, 3}), 0.0);
  EXPECT_DOUBLE_EQ(map_at_k({0.5, 0.5, 0.5}, {1}), 0.0);  // tie goes to index 0
  EXPECT_THROW(map_at_k({1.0}, {}), ContractError);
  EXPECT_THROW(map_at_k({1.0}, {3}), ContractError);
}

TEST(Metrics, MacroF1MatchesBruteForce) {
  Rng rng(4);
  const std::vector<int> classes{0, 1, 2, 3};
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.index(50);
    std::vector<int> p(n), g(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = static_cast<int>(rng.index(4)), g[i] = static_cast<int>(rng.index(4));
    EXPECT_NEAR(macro_f1(p, g, classes), oracle::macro_f1(p, g, classes), 1e-12);
  }
  EXPECT_DOUBLE_EQ(macro_f1({1, 1, 2}, {1, 1, 2}, {1, 2}), 1.0);
  EXPECT_THROW(macro_f1({1}, {7}, {1, 2}), ContractError);
}

TEST(Pls, FullRankMatchesOrdinaryLeastSquares) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor X = random_tensor({40, 8}, rng), Y = random_tensor({40, 3}, rng);
    const PLSModel m = fit_pls(X, Y, 8);
    EXPECT_EQ(m.n_components, 8u);
    const Tensor got = predict(m, X);
    const auto want = oracle::predict(X, oracle::ridge(X, Y, 0.0));
    for (std::size_t i = 0; i < 40; ++i)
      for (std::size_t k = 0; k < 3; ++k) ASSERT_NEAR(got(i, k), want[i][k], 1e-8);
  }
}

TEST(Pls, RecoversNoiselessLinearMapAndWarnsOnClamp) {
  Rng rng(6);
  const Tensor X = random_tensor({30, 5}, rng), B = random_tensor({5, 2}, rng);
  const Tensor Y = matmul(X, B);
  const PLSModel m = fit_pls(X, Y, 100);
  EXPECT_EQ(m.n_components, 5u);
  ASSERT_FALSE(m.warnings.empty());
  EXPECT_NE(m.warnings[0].find("clamped"), std::string::npos);
  for (std::size_t j = 0; j < 5; ++j)
    for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(m.coef(j, k), B(j, k), 1e-9);
}

TEST(Pls, DropsConstantColumns) {
  Rng rng(7);
  Tensor X = random_tensor({20, 4}, rng);
  for (std::size_t i = 0; i < 20; ++i) X(i, 2) = 5.0;
  const PLSModel m = fit_pls(X, random_tensor({20, 2}, rng), 3);
  EXPECT_EQ(m.kept_columns, (std::vector<std::size_t>{0, 1, 3}));
  EXPECT_EQ(predict(m, X).shape(), (Shape{20, 2}));
  EXPECT_THROW(predict(m, random_tensor({2, 3}, rng)), ShapeError);
}

TEST(Ridge, MatchesAugmentedNormalEquations) {
  Rng rng(8);
  for (double lambda : {0.0, 0.1, 1.0, 10.0}) {
    const Tensor X = random_tensor({25, 6}, rng), Y = random_tensor({25, 4}, rng);
    const RidgeModel m = fit_ridge(X, Y, lambda);
    const auto want = oracle::ridge(X, Y, lambda);
    for (std::size_t j = 0; j < 6; ++j)
      for (std::size_t k = 0; k < 4; ++k) ASSERT_NEAR(m.weights(j, k), want[j][k], 1e-10) << lambda;
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(m.intercept[k], want[6][k], 1e-10);
  }
  EXPECT_THROW(fit_ridge(random_tensor({5, 2}, rng), random_tensor({5, 1}, rng), -1.0), ContractError);
}

TEST(Ridge, SingularLeastSquaresWarns) {
  Rng rng(9);
  const RidgeModel m = fit_ridge(random_tensor({3, 6}, rng), random_tensor({3, 1}, rng), 0.0);
  EXPECT_FALSE(m.warnings.empty());
}

TEST(Svc, DualSolutionMatchesPrimalGradientDescent) {
  Rng rng(10);
  for (double C : {0.1, 1.0}) {
    Tensor X;
    std::vector<int> labels;
    blobs(rng, 15, 2, 3, 1.5, X, labels);  // overlapping: some slack is active
    SVCOptions opt;
    opt.tol = 1e-12;
    opt.max_iter = 20000;
    const SVCProbe p = fit_svc(X, labels, C, opt);
    std::vector<double> y;
    for (int l : labels) y.push_back(l == 10 ? 1.0 : -1.0);
    const auto w = oracle::svc_primal(X, y, C);
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_NEAR(p.weights(1, j), w[j], 1e-6) << C;
      EXPECT_NEAR(p.weights(0, j), -w[j], 1e-6);
    }
    EXPECT_NEAR(p.bias[1], w[3], 1e-6);
  }
}

TEST(Svc, MulticlassSeparatesBlobs) {
  Rng rng(11);
  Tensor X;
  std::vector<int> y;
  blobs(rng, 20, 4, 8, 0.3, X, y);
  const SVCProbe p = fit_svc(X, y, 1.0);
  EXPECT_EQ(p.classes, (std::vector<int>{0, 10, 20, 30}));
  EXPECT_DOUBLE_EQ(accuracy(predict(p, X), y), 1.0);
  EXPECT_THROW(fit_svc(X, std::vector<int>(y.size(), 1), 1.0), ContractError);
  EXPECT_THROW(fit_svc(X, y, 0.0), ContractError);
}

TEST(Svc, GridTieKeepsFirstC) {
  Rng rng(12);
  Tensor X;
  std::vector<int> y;
  blobs(rng, 20, 3, 6, 0.1, X, y);
  const auto r = grid_select_svc(X, y, X, y, {100.0, 1.0, 0.01});
  EXPECT_EQ(r.val_accuracy, (std::vector<double>{1.0, 1.0, 1.0}));
  EXPECT_DOUBLE_EQ(r.best_C, 100.0);
  EXPECT_DOUBLE_EQ(r.probe.C, 100.0);
  EXPECT_THROW(grid_select_svc(X, y, X, y, {}), ContractError);
}

TEST(Mlp, SeededAndLearns) {
  Rng rng(13);
  Tensor X;
  std::vector<int> y;
  blobs(rng, 30, 3, 5, 0.5, X, y);
  MLPOptions opt;
  opt.hidden = 16;
  opt.lr = 1e-2;
  opt.seed = 3;
  const MLPProbe a = fit_mlp(X, y, opt), b = fit_mlp(X, y, opt);
  EXPECT_EQ(a.w1, b.w1);
  EXPECT_EQ(a.w2, b.w2);
  EXPECT_EQ(a.epochs_run, b.epochs_run);
  opt.seed = 4;
  EXPECT_NE(fit_mlp(X, y, opt).w1, a.w1);
  EXPECT_GE(accuracy(predict(a, X), y), 0.95);
  const Tensor pr = predict_proba(a, X);
  for (std::size_t i = 0; i < pr.rows(); ++i) {
    double s = 0;
    for (std::size_t k = 0; k < pr.cols(); ++k) s += pr(i, k);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}
