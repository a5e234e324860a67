#include "glab/probes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "glab/error.hpp"
#include "glab/rng.hpp"

namespace glab {

namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using ConstRowMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

Mat to_eigen(const Tensor& t) {
  if (t.rank() != 2) throw ShapeError("probe input must be a matrix, got " + shape_string(t.shape()));
  return ConstRowMap(t.ptr(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

Tensor to_tensor(const Mat& m) {
  Tensor t(Shape{static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) t(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = m(r, c);
  return t;
}

void require_rows(const char* op, const Tensor& X, std::size_t n) {
  if (X.rank() != 2 || X.rows() != n) {
    throw ShapeError(std::string(op) + ": data " + shape_string(X.shape()) + " does not have " + std::to_string(n) +
                     " rows");
  }
}

std::vector<int> sorted_classes(const std::vector<int>& labels) {
  std::vector<int> c(labels);
  std::sort(c.begin(), c.end());
  c.erase(std::unique(c.begin(), c.end()), c.end());
  return c;
}

}  // namespace

// ---------------------------------------------------------------------------
// Metrics

std::vector<double> average_ranks(const std::vector<double>& x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ContractError("pearson: length mismatch");
  if (a.size() < 2) throw ContractError("pearson: need at least 2 values");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) throw NumericError("undefined correlation: zero variance");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ContractError("spearman: length mismatch");
  if (x.size() < 3) throw ContractError("spearman: need at least 3 pairs");
  return pearson(average_ranks(x), average_ranks(y));
}

double map_at_k(const std::vector<double>& scores, const std::vector<std::size_t>& truth_nonzero) {
  if (truth_nonzero.empty()) throw ContractError("map_at_k: empty truth set");
  const std::size_t k = truth_nonzero.size();
  if (k > scores.size()) throw ContractError("map_at_k: more truth features than scores");
  for (std::size_t f : truth_nonzero)
    if (f >= scores.size()) throw ContractError("map_at_k: truth feature outside score vector");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<char> truth(scores.size(), 0);
  for (std::size_t f : truth_nonzero) truth[f] = 1;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < k; ++i) hits += truth[idx[i]];
  return static_cast<double>(hits) / static_cast<double>(k);
}

double macro_f1(const std::vector<int>& predictions, const std::vector<int>& labels, const std::vector<int>& classes) {
  if (predictions.empty()) throw ContractError("macro_f1: empty input");
  if (predictions.size() != labels.size()) throw ContractError("macro_f1: length mismatch");
  if (classes.empty()) throw ContractError("macro_f1: no classes");
  for (int l : labels)
    if (std::find(classes.begin(), classes.end(), l) == classes.end())
      throw ContractError("macro_f1: label " + std::to_string(l) + " not in class list");
  double total = 0.0;
  for (int c : classes) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const bool p = predictions[i] == c, t = labels[i] == c;
      tp += p && t;
      fp += p && !t;
      fn += !p && t;
    }
    total += tp == 0 ? 0.0 : 2.0 * tp / (2.0 * tp + fp + fn);
  }
  return total / static_cast<double>(classes.size());
}

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
  if (predictions.empty() || predictions.size() != labels.size()) throw ContractError("accuracy: bad input sizes");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += predictions[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

// ---------------------------------------------------------------------------
// PLS

PLSModel fit_pls(const Tensor& Xt, const Tensor& Yt, std::size_t n_components) {
  if (n_components < 1) throw ContractError("fit_pls: n_components must be >= 1");
  const std::size_t n = Xt.rows();
  if (Xt.rank() != 2 || n < 2) throw ContractError("fit_pls: need at least 2 samples");
  require_rows("fit_pls", Yt, n);
  PLSModel model;
  model.n_features = Xt.cols();
  Mat X0 = to_eigen(Xt);
  Mat Y = to_eigen(Yt);

  for (Eigen::Index c = 0; c < X0.cols(); ++c) {
    const double mu = X0.col(c).mean();
    if ((X0.col(c).array() - mu).abs().maxCoeff() > 0.0) model.kept_columns.push_back(static_cast<std::size_t>(c));
  }
  if (model.kept_columns.size() < static_cast<std::size_t>(X0.cols())) {
    model.warnings.push_back("fit_pls: dropped " + std::to_string(static_cast<std::size_t>(X0.cols()) - model.kept_columns.size()) +
                             " zero-variance feature column(s)");
  }
  const auto p = static_cast<Eigen::Index>(model.kept_columns.size());
  Mat X(X0.rows(), p);
  for (Eigen::Index j = 0; j < p; ++j) X.col(j) = X0.col(static_cast<Eigen::Index>(model.kept_columns[j]));
  const Vec xm = X.colwise().mean();
  const Vec ym = Y.colwise().mean();
  X.rowwise() -= xm.transpose();
  Y.rowwise() -= ym.transpose();
  model.x_mean.assign(xm.data(), xm.data() + xm.size());
  model.y_mean.assign(ym.data(), ym.data() + ym.size());

  std::size_t limit = std::min<std::size_t>(n - 1, static_cast<std::size_t>(p));
  if (n_components > limit) {
    model.warnings.push_back("fit_pls: n_components " + std::to_string(n_components) + " clamped to " +
                             std::to_string(limit));
    n_components = limit;
  }
  const double scale = std::max(1.0, X.squaredNorm());
  Mat W(p, static_cast<Eigen::Index>(n_components)), P(p, static_cast<Eigen::Index>(n_components)),
      Q(Y.cols(), static_cast<Eigen::Index>(n_components));
  Eigen::Index a = 0;
  for (; a < static_cast<Eigen::Index>(n_components); ++a) {
    const Mat M = X.transpose() * Y;  // p x q
    Vec w;
    if (M.cols() == 1) {
      w = M.col(0);
    } else {
      Eigen::Index best = 0;
      M.colwise().squaredNorm().maxCoeff(&best);
      w = M.col(best);
      for (int it = 0; it < 500; ++it) {
        Vec next = M * (M.transpose() * w);
        const double nn = next.norm();
        if (nn == 0.0) break;
        next /= nn;
        const double delta = (next - w / w.norm()).norm();
        w = next;
        if (delta < 1e-13) break;
      }
    }
    const double wn = w.norm();
    if (!(wn > 0.0)) break;
    w /= wn;
    Eigen::Index arg = 0;
    w.cwiseAbs().maxCoeff(&arg);
    if (w(arg) < 0) w = -w;
    const Vec t = X * w;
    const double tt = t.squaredNorm();
    if (tt <= 1e-20 * scale) break;
    const Vec pl = X.transpose() * t / tt;
    const Vec ql = Y.transpose() * t / tt;
    X -= t * pl.transpose();
    Y -= t * ql.transpose();
    W.col(a) = w;
    P.col(a) = pl;
    Q.col(a) = ql;
  }
  if (static_cast<std::size_t>(a) < n_components) {
    model.warnings.push_back("fit_pls: data rank exhausted after " + std::to_string(a) + " components");
  }
  model.n_components = static_cast<std::size_t>(a);
  W.conservativeResize(p, a);
  P.conservativeResize(p, a);
  Q.conservativeResize(Q.rows(), a);
  Mat coef = Mat::Zero(p, Y.cols());
  if (a > 0) {
    const Mat R = W * (P.transpose() * W).partialPivLu().inverse();
    coef = R * Q.transpose();
  }
  model.weights = to_tensor(W);
  model.x_loadings = to_tensor(P);
  model.y_loadings = to_tensor(Q);
  model.coef = to_tensor(coef);
  return model;
}

Tensor predict(const PLSModel& model, const Tensor& Xt) {
  if (Xt.rank() != 2 || Xt.cols() != model.n_features) {
    throw ShapeError("pls predict: input " + shape_string(Xt.shape()) + " does not have " +
                     std::to_string(model.n_features) + " features");
  }
  const Mat X0 = to_eigen(Xt);
  const auto p = static_cast<Eigen::Index>(model.kept_columns.size());
  Mat X(X0.rows(), p);
  for (Eigen::Index j = 0; j < p; ++j) {
    X.col(j) = X0.col(static_cast<Eigen::Index>(model.kept_columns[j])).array() - model.x_mean[j];
  }
  Mat out = X * to_eigen(model.coef);
  for (Eigen::Index c = 0; c < out.cols(); ++c) out.col(c).array() += model.y_mean[c];
  return to_tensor(out);
}

// ---------------------------------------------------------------------------
// Ridge

RidgeModel fit_ridge(const Tensor& Xt, const Tensor& Yt, double lambda) {
  if (!(lambda >= 0.0)) throw ContractError("fit_ridge: lambda must be >= 0");
  if (Xt.rank() != 2 || Xt.rows() < 1) throw ContractError("fit_ridge: empty design matrix");
  require_rows("fit_ridge", Yt, Xt.rows());
  RidgeModel model;
  Mat X = to_eigen(Xt);
  Mat Y = to_eigen(Yt);
  const Vec xm = X.colwise().mean();
  const Vec ym = Y.colwise().mean();
  X.rowwise() -= xm.transpose();
  Y.rowwise() -= ym.transpose();
  Mat W;
  if (lambda > 0.0) {
    Mat A = X.transpose() * X;
    A.diagonal().array() += lambda;
    W = A.ldlt().solve(X.transpose() * Y);
  } else {
    Eigen::CompleteOrthogonalDecomposition<Mat> cod(X);
    if (cod.rank() < X.cols()) {
      model.warnings.push_back("fit_ridge: singular system at lambda=0, using minimum-norm least squares");
    }
    W = cod.solve(Y);
  }
  const Vec b = ym - W.transpose() * xm;
  model.weights = to_tensor(W);
  model.intercept.assign(b.data(), b.data() + b.size());
  return model;
}

Tensor predict(const RidgeModel& model, const Tensor& Xt) {
  if (Xt.rank() != 2 || Xt.cols() != model.weights.rows()) {
    throw ShapeError("ridge predict: input " + shape_string(Xt.shape()) + " incompatible with weights " +
                     shape_string(model.weights.shape()));
  }
  Mat out = to_eigen(Xt) * to_eigen(model.weights);
  for (Eigen::Index c = 0; c < out.cols(); ++c) out.col(c).array() += model.intercept[c];
  return to_tensor(out);
}

// ---------------------------------------------------------------------------
// Linear SVC

namespace {

// Dual coordinate descent for min 0.5|w|^2 + C sum max(0, 1 - y w.x)^2, with
// x augmented by a constant 1 column.
Vec svc_binary(const Mat& Xa, const Vec& y, double C, const SVCOptions& opt, Rng& rng) {
  const Eigen::Index n = Xa.rows();
  const double diag = 0.5 / C;
  Vec alpha = Vec::Zero(n);
  Vec w = Vec::Zero(Xa.cols());
  Vec qii(n);
  for (Eigen::Index i = 0; i < n; ++i) qii(i) = Xa.row(i).squaredNorm() + diag;
  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  for (std::size_t it = 0; it < opt.max_iter; ++it) {
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    double pg_max = -std::numeric_limits<double>::infinity();
    double pg_min = std::numeric_limits<double>::infinity();
    for (std::size_t oi : order) {
      const auto i = static_cast<Eigen::Index>(oi);
      const double G = y(i) * Xa.row(i).dot(w) - 1.0 + diag * alpha(i);
      const double pg = alpha(i) == 0.0 ? std::min(G, 0.0) : G;
      pg_max = std::max(pg_max, pg);
      pg_min = std::min(pg_min, pg);
      if (pg == 0.0) continue;
      const double old = alpha(i);
      alpha(i) = std::max(old - G / qii(i), 0.0);
      w += (alpha(i) - old) * y(i) * Xa.row(i).transpose();
    }
    if (pg_max - pg_min < opt.tol) break;
  }
  return w;
}

}  // namespace

SVCProbe fit_svc(const Tensor& Xt, const std::vector<int>& labels, double C, const SVCOptions& options) {
  if (!(C > 0.0)) throw ContractError("fit_svc: C must be positive");
  require_rows("fit_svc", Xt, labels.size());
  SVCProbe probe;
  probe.C = C;
  probe.classes = sorted_classes(labels);
  if (probe.classes.size() < 2) throw ContractError("fit_svc: need at least 2 classes");
  const Mat X = to_eigen(Xt);
  Mat Xa(X.rows(), X.cols() + 1);
  Xa.leftCols(X.cols()) = X;
  Xa.col(X.cols()).setOnes();
  // Two classes share one separator, as in the common reference implementation.
  const std::size_t n_models = probe.classes.size() == 2 ? 1 : probe.classes.size();
  probe.weights = Tensor(Shape{probe.classes.size(), Xt.cols()});
  probe.bias.assign(probe.classes.size(), 0.0);
  Rng rng = Rng::stream(options.seed, "probes.svc");
  for (std::size_t k = 0; k < n_models; ++k) {
    const int positive = probe.classes.size() == 2 ? probe.classes[1] : probe.classes[k];
    Vec y(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) y(i) = labels[static_cast<std::size_t>(i)] == positive ? 1.0 : -1.0;
    const Vec w = svc_binary(Xa, y, C, options, rng);
    const std::size_t row = probe.classes.size() == 2 ? 1 : k;
    for (Eigen::Index j = 0; j < X.cols(); ++j) probe.weights(row, static_cast<std::size_t>(j)) = w(j);
    probe.bias[row] = w(X.cols());
    if (probe.classes.size() == 2) {
      for (Eigen::Index j = 0; j < X.cols(); ++j) probe.weights(0, static_cast<std::size_t>(j)) = -w(j);
      probe.bias[0] = -w(X.cols());
    }
  }
  return probe;
}

Tensor decision_scores(const SVCProbe& probe, const Tensor& Xt) {
  if (Xt.rank() != 2 || Xt.cols() != probe.weights.cols()) {
    throw ShapeError("svc: input " + shape_string(Xt.shape()) + " incompatible with weights " +
                     shape_string(probe.weights.shape()));
  }
  Mat s = to_eigen(Xt) * to_eigen(probe.weights).transpose();
  for (Eigen::Index c = 0; c < s.cols(); ++c) s.col(c).array() += probe.bias[c];
  return to_tensor(s);
}

namespace {

std::vector<int> argmax_classes(const Tensor& scores, const std::vector<int>& classes) {
  std::vector<int> out(scores.rows());
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < scores.cols(); ++c)
      if (scores(r, c) > scores(r, best)) best = c;
    out[r] = classes[best];
  }
  return out;
}

}  // namespace

std::vector<int> predict(const SVCProbe& probe, const Tensor& X) {
  return argmax_classes(decision_scores(probe, X), probe.classes);
}

SVCGridResult grid_select_svc(const Tensor& X_train, const std::vector<int>& y_train, const Tensor& X_val,
                              const std::vector<int>& y_val, const std::vector<double>& grid,
                              const SVCOptions& options) {
  if (grid.empty()) throw ContractError("grid_select_svc: empty C grid");
  SVCGridResult result;
  double best = -1.0;
  for (double C : grid) {
    SVCProbe probe = fit_svc(X_train, y_train, C, options);
    const double acc = accuracy(predict(probe, X_val), y_val);
    result.val_accuracy.push_back(acc);
    if (acc > best) {
      best = acc;
      result.best_C = C;
      result.probe = std::move(probe);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// MLP

namespace {

struct AdamState {
  Mat m, v;
  explicit AdamState(const Mat& like) : m(Mat::Zero(like.rows(), like.cols())), v(Mat::Zero(like.rows(), like.cols())) {}
  void step(Mat& w, const Mat& g, double lr, std::int64_t t) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g.cwiseProduct(g);
    const double lr_t = lr * std::sqrt(1 - std::pow(b2, static_cast<double>(t))) / (1 - std::pow(b1, static_cast<double>(t)));
    w.array() -= lr_t * m.array() / (v.array().sqrt() + eps);
  }
};

Mat glorot(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double lim = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Mat w(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) w(r, c) = rng.uniform(-lim, lim);
  return w;
}

Mat softmax_rows(const Mat& z) {
  Mat p = z;
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    const double mx = p.row(r).maxCoeff();
    p.row(r) = (p.row(r).array() - mx).exp();
    p.row(r) /= p.row(r).sum();
  }
  return p;
}

}  // namespace

MLPProbe fit_mlp(const Tensor& Xt, const std::vector<int>& labels, const MLPOptions& opt) {
  require_rows("fit_mlp", Xt, labels.size());
  if (labels.empty()) throw ContractError("fit_mlp: no samples");
  MLPProbe probe;
  probe.options = opt;
  probe.classes = sorted_classes(labels);
  if (probe.classes.size() < 2) throw ContractError("fit_mlp: need at least 2 classes");
  const Mat X = to_eigen(Xt);
  const auto n = X.rows(), d = X.cols(), h = static_cast<Eigen::Index>(opt.hidden),
             k = static_cast<Eigen::Index>(probe.classes.size());
  std::vector<Eigen::Index> y(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    y[static_cast<std::size_t>(i)] =
        std::lower_bound(probe.classes.begin(), probe.classes.end(), labels[static_cast<std::size_t>(i)]) -
        probe.classes.begin();
  }
  Rng rng = Rng::stream(opt.seed, "probes.mlp");
  Mat W1 = glorot(d, h, rng), W2 = glorot(h, k, rng);
  Mat B1 = Mat::Zero(1, h), B2 = Mat::Zero(1, k);
  AdamState a1(W1), a2(W2), c1(B1), c2(B2);
  const std::size_t bs = std::min<std::size_t>(opt.batch_size, static_cast<std::size_t>(n));
  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  double best = std::numeric_limits<double>::infinity();
  std::size_t no_improve = 0;
  std::int64_t t = 0;
  for (std::size_t epoch = 0; epoch < opt.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t s = 0; s < order.size(); s += bs) {
      const std::size_t e = std::min(order.size(), s + bs);
      const auto m = static_cast<Eigen::Index>(e - s);
      Mat xb(m, d);
      for (Eigen::Index i = 0; i < m; ++i) xb.row(i) = X.row(static_cast<Eigen::Index>(order[s + static_cast<std::size_t>(i)]));
      Mat z1 = xb * W1;
      z1.rowwise() += B1.row(0);
      const Mat a = z1.cwiseMax(0.0);
      Mat z2 = a * W2;
      z2.rowwise() += B2.row(0);
      Mat p = softmax_rows(z2);
      double loss = 0.0;
      for (Eigen::Index i = 0; i < m; ++i) {
        const auto yi = y[order[s + static_cast<std::size_t>(i)]];
        loss -= std::log(std::max(p(i, yi), 1e-300));
        p(i, yi) -= 1.0;
      }
      const double md = static_cast<double>(m);
      loss = loss / md + 0.5 * opt.alpha * (W1.squaredNorm() + W2.squaredNorm()) / md;
      epoch_loss += loss * md;
      const Mat dz2 = p / md;
      const Mat gW2 = a.transpose() * dz2 + opt.alpha * W2 / md;
      const Mat gB2 = dz2.colwise().sum();
      const Mat dz1 = ((dz2 * W2.transpose()).array() * (z1.array() > 0.0).cast<double>()).matrix();
      const Mat gW1 = xb.transpose() * dz1 + opt.alpha * W1 / md;
      const Mat gB1 = dz1.colwise().sum();
      ++t;
      a1.step(W1, gW1, opt.lr, t);
      a2.step(W2, gW2, opt.lr, t);
      c1.step(B1, gB1, opt.lr, t);
      c2.step(B2, gB2, opt.lr, t);
    }
    epoch_loss /= static_cast<double>(n);
    probe.epochs_run = epoch + 1;
    probe.final_loss = epoch_loss;
    if (!std::isfinite(epoch_loss)) throw NumericError("fit_mlp: non-finite loss");
    if (epoch_loss > best - opt.tol) {
      ++no_improve;
    } else {
      no_improve = 0;
    }
    best = std::min(best, epoch_loss);
    if (no_improve > opt.n_iter_no_change) break;
  }
  probe.w1 = to_tensor(W1);
  probe.b1 = to_tensor(B1);
  probe.w2 = to_tensor(W2);
  probe.b2 = to_tensor(B2);
  return probe;
}

Tensor predict_proba(const MLPProbe& probe, const Tensor& Xt) {
  if (Xt.rank() != 2 || Xt.cols() != probe.w1.rows()) {
    throw ShapeError("mlp: input " + shape_string(Xt.shape()) + " incompatible with weights " +
                     shape_string(probe.w1.shape()));
  }
  Mat z1 = to_eigen(Xt) * to_eigen(probe.w1);
  z1.rowwise() += to_eigen(probe.b1).row(0);
  Mat z2 = z1.cwiseMax(0.0) * to_eigen(probe.w2);
  z2.rowwise() += to_eigen(probe.b2).row(0);
  return to_tensor(softmax_rows(z2));
}

std::vector<int> predict(const MLPProbe& probe, const Tensor& X) {
  return argmax_classes(predict_proba(probe, X), probe.classes);
}

}  // namespace glab
