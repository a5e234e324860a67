#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "glab/tensor.hpp"

namespace glab {

// Fractional ranks (1-based, ties share the average rank).
std::vector<double> average_ranks(const std::vector<double>& x);

// Pearson correlation; NumericError when either side has zero variance.
double pearson(const std::vector<double>& a, const std::vector<double>& b);
// Pearson correlation of average-tie ranks; requires equal lengths >= 3.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

// |top-k(scores) ∩ truth| / k with k = |truth|; ties go to the lower index.
double map_at_k(const std::vector<double>& scores, const std::vector<std::size_t>& truth_nonzero);

// Unweighted mean of per-class F1 over `classes`.
double macro_f1(const std::vector<int>& predictions, const std::vector<int>& labels, const std::vector<int>& classes);

// ---------------------------------------------------------------------------
// PLS regression (NIPALS-style deflation on centred data)

struct PLSModel {
  std::size_t n_components = 0;  // components actually extracted
  std::vector<std::size_t> kept_columns;
  std::vector<double> x_mean;    // over kept columns
  std::vector<double> y_mean;
  Tensor weights;                // kept_features x components
  Tensor x_loadings;             // kept_features x components
  Tensor y_loadings;             // targets x components
  Tensor coef;                   // kept_features x targets
  std::size_t n_features = 0;
  std::vector<std::string> warnings;
};

PLSModel fit_pls(const Tensor& X, const Tensor& Y, std::size_t n_components = 100);
Tensor predict(const PLSModel& model, const Tensor& X);

// ---------------------------------------------------------------------------
// Ridge regression

struct RidgeModel {
  Tensor weights;  // features x targets
  std::vector<double> intercept;
  std::vector<std::string> warnings;
};

RidgeModel fit_ridge(const Tensor& X, const Tensor& Y, double lambda);
Tensor predict(const RidgeModel& model, const Tensor& X);

// ---------------------------------------------------------------------------
// Linear SVC: one-vs-rest, squared hinge + L2, bias treated as an extra
// regularised feature. Solved by seeded dual coordinate descent.

struct SVCOptions {
  double tol = 1e-4;
  std::size_t max_iter = 1000;
  std::uint64_t seed = 0;
};

struct SVCProbe {
  std::vector<int> classes;
  Tensor weights;            // classes x features
  std::vector<double> bias;  // per class
  double C = 1.0;
};

SVCProbe fit_svc(const Tensor& X, const std::vector<int>& labels, double C, const SVCOptions& options = {});
Tensor decision_scores(const SVCProbe& probe, const Tensor& X);  // samples x classes
std::vector<int> predict(const SVCProbe& probe, const Tensor& X);

struct SVCGridResult {
  double best_C = 0.0;
  std::vector<double> val_accuracy;  // aligned with the grid
  SVCProbe probe;
};
// Fits each C on (X_train, y_train) and keeps the best validation accuracy
// (first C wins ties).
SVCGridResult grid_select_svc(const Tensor& X_train, const std::vector<int>& y_train, const Tensor& X_val,
                              const std::vector<int>& y_val, const std::vector<double>& grid = {0.01, 1.0, 100.0},
                              const SVCOptions& options = {});

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels);

// ---------------------------------------------------------------------------
// MLP classifier: one ReLU hidden layer, softmax output, Adam.

struct MLPOptions {
  std::size_t hidden = 100;
  double lr = 1e-3;
  double alpha = 1e-4;  // L2 penalty
  std::size_t batch_size = 200;
  std::size_t max_epochs = 200;
  double tol = 1e-4;
  std::size_t n_iter_no_change = 10;
  std::uint64_t seed = 0;
};

struct MLPProbe {
  std::vector<int> classes;
  Tensor w1, b1, w2, b2;
  std::size_t epochs_run = 0;
  double final_loss = 0.0;
  MLPOptions options;
};

MLPProbe fit_mlp(const Tensor& X, const std::vector<int>& labels, const MLPOptions& options = {});
Tensor predict_proba(const MLPProbe& probe, const Tensor& X);
std::vector<int> predict(const MLPProbe& probe, const Tensor& X);

}  // namespace glab
