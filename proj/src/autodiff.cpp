#include "glab/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "glab/error.hpp"
#include "kernels.hpp"

namespace glab {

// ---------------------------------------------------------------------------
// ParameterSet

Parameter& ParameterSet::add(std::string name, Tensor value) {
  if (find(name)) throw ContractError("duplicate parameter name '" + name + "'");
  auto p = std::make_unique<Parameter>();
  p->name = std::move(name);
  p->grad = Tensor::zeros_like(value);
  p->value = std::move(value);
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter* ParameterSet::find(const std::string& name) {
  for (auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

const Parameter* ParameterSet::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

Parameter& ParameterSet::get(const std::string& name) {
  if (auto* p = find(name)) return *p;
  throw ContractError("unknown parameter '" + name + "'");
}

const Parameter& ParameterSet::get(const std::string& name) const {
  if (const auto* p = find(name)) return *p;
  throw ContractError("unknown parameter '" + name + "'");
}

std::size_t ParameterSet::total_elements() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) {
    if (p->grad.size() != p->value.size() || p->grad.shape() != p->value.shape()) {
      p->grad = Tensor::zeros_like(p->value);
    } else {
      p->grad.fill(0.0);
    }
  }
}

// ---------------------------------------------------------------------------
// Graph

const Tensor& Var::value() const { return graph->value(id); }
const Tensor& Var::grad() const { return graph->grad(id); }

Var Graph::constant(Tensor t) {
  Node n;
  n.value = std::move(t);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Graph::leaf(Tensor t, bool requires_grad) {
  Node n;
  n.value = std::move(t);
  n.requires_grad = requires_grad && recording_;
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Graph::param(Parameter& p) {
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].param == &p) return Var{this, i};
  Node n;
  n.external = &p.value;
  n.param = &p;
  n.requires_grad = recording_;
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

const Tensor& Graph::value(std::size_t id) const { return nodes_.at(id).val(); }

const Tensor& Graph::grad(std::size_t id) const {
  const Node& n = nodes_.at(id);
  if (n.grad.size() == n.val().size() && n.grad.shape() == n.val().shape()) return n.grad;
  // Lazily materialised zero gradient for nodes that received none.
  auto& self = const_cast<Graph&>(*this);
  self.empty_grad_ = Tensor::zeros_like(n.val());
  return self.empty_grad_;
}

bool Graph::any_requires_grad(std::initializer_list<Var> vars) const {
  if (!recording_) return false;
  for (const Var& v : vars)
    if (nodes_[v.id].requires_grad) return true;
  return false;
}

Var Graph::push(Tensor value, std::vector<std::size_t> parents, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  if (recording_) {
    for (std::size_t p : parents) n.requires_grad = n.requires_grad || nodes_[p].requires_grad;
  }
  if (n.requires_grad) {
    n.parents = std::move(parents);
    n.backward = std::move(fn);
  }
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Tensor& Graph::grad_acc(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.val().size() || n.grad.shape() != n.val().shape()) n.grad = Tensor::zeros_like(n.val());
  return n.grad;
}

void Graph::backward(Var loss) {
  if (loss.graph != this) throw ContractError("backward: loss belongs to a different graph");
  if (value(loss.id).size() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " + shape_string(value(loss.id).shape()));
  }
  if (backward_done_) throw ContractError("backward: graph was already differentiated; build a new graph");
  backward_done_ = true;
  for (Node& n : nodes_) n.grad = Tensor();
  if (!nodes_[loss.id].requires_grad) return;
  grad_acc(loss.id)[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this, i);
  }
  for (Node& n : nodes_) {
    if (!n.param || n.grad.empty()) continue;
    Tensor& acc = n.param->grad;
    if (acc.size() != n.param->value.size() || acc.shape() != n.param->value.shape()) {
      acc = Tensor::zeros_like(n.param->value);
    }
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += n.grad[j];
  }
}

// ---------------------------------------------------------------------------
// Operations

namespace {

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) + " and " +
                   shape_string(b.shape()));
}

void require_matrix(const char* op, const Tensor& a) {
  if (a.rank() != 2) throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_string(a.shape()));
}

template <typename Forward, typename Deriv>
Var unary(Var a, Forward f, Deriv df) {
  Graph& g = *a.graph;
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  std::size_t aid = a.id;
  return g.push(std::move(out), {aid}, [aid, df](Graph& g, std::size_t self) {
    const Tensor& go = g.grad(self);
    const Tensor& x = g.value(aid);
    const Tensor& y = g.value(self);
    Tensor& ga = g.grad_acc(aid);
    for (std::size_t i = 0; i < x.size(); ++i) ga[i] += go[i] * df(x[i], y[i]);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  Graph& g = *a.graph;
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.rows()) shape_fail("matmul", A, B);
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  Tensor out(Shape{m, n});
  kernels::gemm(A.ptr(), B.ptr(), out.ptr(), m, k, n, false, false, false);
  std::size_t aid = a.id, bid = b.id;
  return g.push(std::move(out), {aid, bid}, [aid, bid, m, k, n](Graph& g, std::size_t self) {
    const Tensor& go = g.grad(self);
    if (g.requires_grad(aid))
      kernels::gemm(go.ptr(), g.value(bid).ptr(), g.grad_acc(aid).ptr(), m, n, k, false, true, true);
    if (g.requires_grad(bid))
      kernels::gemm(g.value(aid).ptr(), go.ptr(), g.grad_acc(bid).ptr(), k, m, n, true, false, true);
  });
}

Var matmul_nt(Var a, Var b) {
  Graph& g = *a.graph;
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.cols()) shape_fail("matmul_nt", A, B);
  const std::size_t m = A.rows(), k = A.cols(), n = B.rows();
  Tensor out(Shape{m, n});
  kernels::gemm(A.ptr(), B.ptr(), out.ptr(), m, k, n, false, true, false);
  std::size_t aid = a.id, bid = b.id;
  return g.push(std::move(out), {aid, bid}, [aid, bid, m, k, n](Graph& g, std::size_t self) {
    const Tensor& go = g.grad(self);
    if (g.requires_grad(aid))
      kernels::gemm(go.ptr(), g.value(bid).ptr(), g.grad_acc(aid).ptr(), m, n, k, false, false, true);
    if (g.requires_grad(bid))
      kernels::gemm(go.ptr(), g.value(aid).ptr(), g.grad_acc(bid).ptr(), n, m, k, true, false, true);
  });
}

Var transpose(Var a) {
  Graph& g = *a.graph;
  const Tensor& A = a.value();
  require_matrix("transpose", A);
  const std::size_t m = A.rows(), n = A.cols();
  Tensor out(Shape{n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(j, i) = A(i, j);
  std::size_t aid = a.id;
  return g.push(std::move(out), {aid}, [aid, m, n](Graph& g, std::size_t self) {
    const Tensor& go = g.grad(self);
    Tensor& ga = g.grad_acc(aid);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga(i, j) += go(j, i);
  });
}

namespace {

enum class Broadcast { Same, Row, Scalar };

Broadcast classify(const char* op, const Tensor& A, const Tensor& B) {
  if (A.shape() == B.shape()) return Broadcast::Same;
  if (B.size() == 1) return Broadcast::Scalar;
  if (A.rank() == 2 && B.rows() == 1 && B.size() == A.cols()) return Broadcast::Row;
  shape_fail(op, A, B);
}

}  // namespace

Var add(Var a, Var b) {
  Graph& g = *a.graph;
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const Broadcast mode = classify("add", A, B);
  Tensor out = A;
  const std::size_t cols = A.cols();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] += mode == Broadcast::Same ? B[i] : mode == Broadcast::Row ? B[i % cols] : B[0];
  }
  std::size_t aid = a.id, bid = b.id;
  return g.push(std::move(out), {aid, bid}, [aid, bid, mode, cols](Graph& g, std::size_t self) {
    const Tensor& go = g.grad(self);
    if (g.requires_grad(aid)) {
      Tensor& ga = g.grad_acc(aid);
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    }
    if (g.requires_grad(bid)) {
      Tensor& gb = g.grad_acc(bid);
      for (std::size_t i = 0; i < go.size(); ++i) {
        if (mode == Broadcast::Same) gb[i] += go[i];
        else if (mode == Broadcast::Row) gb[i % cols] += go[i];
        else gb[0] += go[i];
      }
    }
  });
}

Var sub(Var a, Var b) {
  Graph& g = *a.graph;
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.shape() != B.shape()) shape_fail("sub", A, B);
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= B[i];
  std::size_t aid = a.id, bid = b.id;
  return g.push(std::move(out), {aid, bid}, [aid, bid](Graph& g, std::size_t self) {
    const Tensor& go = g.grad(self);
    if (g.requires_grad(aid)) {
      Tensor& ga = g.grad_acc(aid);
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    }
    if (g.requires_grad(bid)) {
      Tensor& gb = g.grad_acc(bid);
      for (std::size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
    }
  });
}

Var mul(Var a, Var b) {
  Graph& g = *a.graph;
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const Broadcast mode = classify("mul", A, B);
  if (mode == Broadcast::Row) shape_fail("mul", A, B);
  const bool scalar = mode == Broadcast::Scalar;
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= scalar ? B[0] : B[i];
  std::size_t aid = a.id, bid = b.id;
  return g.push(std::move(out), {aid, bid}, [aid, bid, scalar](Graph& g, std::size_t self) {
    const Tensor& go = g.grad(self);
    const Tensor& A = g.value(aid);
    const Tensor& B = g.value(bid);
    if (g.requires_grad(aid)) {
      Tensor& ga = g.grad_acc(aid);
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * (scalar ? B[0] : B[i]);
    }
    if (g.requires_grad(bid)) {
      Tensor& gb = g.grad_acc(bid);
      for (std::size_t i = 0; i < go.size(); ++i) gb[scalar ? 0 : i] += go[i] * A[i];
    }
  });
}

Var scale(Var a, double c) {
  return unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  for (double v : a.value().data())
    if (!(v > 0.0)) throw NumericError("log of non-positive value");
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var gelu(Var a) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  return unary(
      a,
      [](double x) { return 0.5 * x * (1.0 + std::tanh(kC * (x + kA * x * x * x))); },
      [](double x, double) {
        const double t = std::tanh(kC * (x + kA * x * x * x));
        return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kC * (1.0 + 3.0 * kA * x * x);
      });
}

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var clamp_max(Var a, double hi) {
  return unary(a, [hi](double x) { return std::min(x, hi); }, [hi](double x, double) { return x < hi ? 1.0 : 0.0; });
}

Var sum(Var a) {
  Graph& g = *a.graph;
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  std::size_t aid = a.id;
  return g.push(Tensor::scalar(s), {aid}, [aid](Graph& g, std::size_t self) {
    const double go = g.grad(self)[0];
    Tensor& ga = g.grad_acc(aid);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go;
  });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  Graph& g = *x.graph;
  const Tensor& X = x.value();
  require_matrix("layer_norm", X);
  const std::size_t m = X.rows(), n = X.cols();
  if (gain.value().size() != n || bias.value().size() != n) shape_fail("layer_norm", X, gain.value());
  const Tensor& G = gain.value();
  const Tensor& B = bias.value();
  Tensor out(X.shape());
  auto xhat = std::make_shared<std::vector<double>>(m * n);
  auto inv_std = std::make_shared<std::vector<double>>(m);
  for (std::size_t r = 0; r < m; ++r) {
    const double* row = X.ptr() + r * n;
    double mu = 0.0;
    for (std::size_t c = 0; c < n; ++c) mu += row[c];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t c = 0; c < n; ++c) {
      const double h = (row[c] - mu) * is;
      (*xhat)[r * n + c] = h;
      out(r, c) = h * G[c] + B[c];
    }
  }
  std::size_t xid = x.id, gid = gain.id, bid = bias.id;
  return g.push(std::move(out), {xid, gid, bid}, [=](Graph& g, std::size_t self) {
    const Tensor& go = g.grad(self);
    const Tensor& G = g.value(gid);
    if (g.requires_grad(gid)) {
      Tensor& gg = g.grad_acc(gid);
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) gg[c] += go(r, c) * (*xhat)[r * n + c];
    }
    if (g.requires_grad(bid)) {
      Tensor& gb = g.grad_acc(bid);
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) gb[c] += go(r, c);
    }
    if (g.requires_grad(xid)) {
      Tensor& gx = g.grad_acc(xid);
      const double nn = static_cast<double>(n);
      for (std::size_t r = 0; r < m; ++r) {
        double s1 = 0.0, s2 = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
          const double d = go(r, c) * G[c];
          s1 += d;
          s2 += d * (*xhat)[r * n + c];
        }
        const double is = (*inv_std)[r];
        for (std::size_t c = 0; c < n; ++c) {
          const double d = go(r, c) * G[c];
          gx(r, c) += is / nn * (nn * d - s1 - (*xhat)[r * n + c] * s2);
        }
      }
    }
  });
}

namespace {

void softmax_row(const double* in, double* out, std::size_t n) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < n; ++c) mx = std::max(mx, in[c]);
  double s = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    out[c] = std::exp(in[c] - mx);
    s += out[c];
  }
  for (std::size_t c = 0; c < n; ++c) out[c] /= s;
}

double logsumexp_row(const double* in, std::size_t n) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < n; ++c) mx = std::max(mx, in[c]);
  double s = 0.0;
  for (std::size_t c = 0; c < n; ++c) s += std::exp(in[c] - mx);
  return mx + std::log(s);
}

}  // namespace

Var softmax_rows(Var x) {
  Graph& g = *x.graph;
  const Tensor& X = x.value();
  const std::size_t m = X.rows(), n = X.cols();
  Tensor out(X.shape());
  for (std::size_t r = 0; r < m; ++r) softmax_row(X.ptr() + r * n, out.ptr() + r * n, n);
  std::size_t xid = x.id;
  return g.push(std::move(out), {xid}, [xid, m, n](Graph& g, std::size_t self) {
    const Tensor& go = g.grad(self);
    const Tensor& y = g.value(self);
    Tensor& gx = g.grad_acc(xid);
    for (std::size_t r = 0; r < m; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < n; ++c) dot += go(r, c) * y(r, c);
      for (std::size_t c = 0; c < n; ++c) gx(r, c) += y(r, c) * (go(r, c) - dot);
    }
  });
}

Var log_softmax_rows(Var x) {
  Graph& g = *x.graph;
  const Tensor& X = x.value();
  const std::size_t m = X.rows(), n = X.cols();
  Tensor out(X.shape());
  for (std::size_t r = 0; r < m; ++r) {
    const double lse = logsumexp_row(X.ptr() + r * n, n);
    for (std::size_t c = 0; c < n; ++c) out(r, c) = X(r, c) - lse;
  }
  std::size_t xid = x.id;
  return g.push(std::move(out), {xid}, [xid, m, n](Graph& g, std::size_t self) {
    const Tensor& go = g.grad(self);
    const Tensor& y = g.value(self);
    Tensor& gx = g.grad_acc(xid);
    for (std::size_t r = 0; r < m; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < n; ++c) s += go(r, c);
      for (std::size_t c = 0; c < n; ++c) gx(r, c) += go(r, c) - std::exp(y(r, c)) * s;
    }
  });
}

Var cross_entropy(Var logits, const std::vector<int>& targets) {
  Graph& g = *logits.graph;
  const Tensor& X = logits.value();
  const std::size_t m = X.rows(), n = X.cols();
  if (targets.size() != m) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                     shape_string(X.shape()));
  }
  std::size_t valid = 0;
  double total = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    const int t = targets[r];
    if (t < 0) continue;
    if (static_cast<std::size_t>(t) >= n) throw ShapeError("cross_entropy: target out of range");
    ++valid;
    total += logsumexp_row(X.ptr() + r * n, n) - X(r, static_cast<std::size_t>(t));
  }
  if (valid == 0) throw ContractError("cross_entropy: every position is masked");
  std::size_t xid = logits.id;
  return g.push(Tensor::scalar(total / static_cast<double>(valid)), {xid},
                [xid, m, n, valid, targets](Graph& g, std::size_t self) {
                  const double go = g.grad(self)[0] / static_cast<double>(valid);
                  const Tensor& X = g.value(xid);
                  Tensor& gx = g.grad_acc(xid);
                  std::vector<double> p(n);
                  for (std::size_t r = 0; r < m; ++r) {
                    const int t = targets[r];
                    if (t < 0) continue;
                    softmax_row(X.ptr() + r * n, p.data(), n);
                    p[static_cast<std::size_t>(t)] -= 1.0;
                    for (std::size_t c = 0; c < n; ++c) gx(r, c) += go * p[c];
                  }
                });
}

Var embedding(Var weight, const std::vector<int>& ids) {
  Graph& g = *weight.graph;
  const Tensor& W = weight.value();
  require_matrix("embedding", W);
  const std::size_t d = W.cols();
  Tensor out(Shape{ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= W.rows()) {
      throw ShapeError("embedding: id " + std::to_string(ids[i]) + " outside table " + shape_string(W.shape()));
    }
    std::copy_n(W.ptr() + static_cast<std::size_t>(ids[i]) * d, d, out.ptr() + i * d);
  }
  std::size_t wid = weight.id;
  return g.push(std::move(out), {wid}, [wid, d, ids](Graph& g, std::size_t self) {
    const Tensor& go = g.grad(self);
    Tensor& gw = g.grad_acc(wid);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      double* dst = gw.ptr() + static_cast<std::size_t>(ids[i]) * d;
      const double* src = go.ptr() + i * d;
      for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
    }
  });
}

Var gather_rows(Var x, const std::vector<std::size_t>& rows) {
  Graph& g = *x.graph;
  const Tensor& X = x.value();
  require_matrix("gather_rows", X);
  const std::size_t d = X.cols();
  Tensor out(Shape{rows.size(), d});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= X.rows()) throw ShapeError("gather_rows: row index outside " + shape_string(X.shape()));
    std::copy_n(X.ptr() + rows[i] * d, d, out.ptr() + i * d);
  }
  std::size_t xid = x.id;
  return g.push(std::move(out), {xid}, [xid, d, rows](Graph& g, std::size_t self) {
    const Tensor& go = g.grad(self);
    Tensor& gx = g.grad_acc(xid);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      double* dst = gx.ptr() + rows[i] * d;
      const double* src = go.ptr() + i * d;
      for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
    }
  });
}

Var concat_rows(Var a, Var b) {
  Graph& g = *a.graph;
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.cols()) shape_fail("concat_rows", A, B);
  const std::size_t na = A.size();
  std::vector<double> data(A.storage());
  data.insert(data.end(), B.storage().begin(), B.storage().end());
  Tensor out(Shape{A.rows() + B.rows(), A.cols()}, std::move(data));
  std::size_t aid = a.id, bid = b.id;
  return g.push(std::move(out), {aid, bid}, [aid, bid, na](Graph& g, std::size_t self) {
    const Tensor& go = g.grad(self);
    if (g.requires_grad(aid)) {
      Tensor& ga = g.grad_acc(aid);
      for (std::size_t i = 0; i < na; ++i) ga[i] += go[i];
    }
    if (g.requires_grad(bid)) {
      Tensor& gb = g.grad_acc(bid);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go[na + i];
    }
  });
}

Var l2_normalize_rows(Var x) {
  Graph& g = *x.graph;
  const Tensor& X = x.value();
  require_matrix("l2_normalize_rows", X);
  const std::size_t m = X.rows(), n = X.cols();
  Tensor out(X.shape());
  auto norms = std::make_shared<std::vector<double>>(m);
  for (std::size_t r = 0; r < m; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < n; ++c) s += X(r, c) * X(r, c);
    const double nr = std::sqrt(s);
    if (!(nr > 0.0) || !std::isfinite(nr)) throw NumericError("zero-norm row " + std::to_string(r));
    (*norms)[r] = nr;
    for (std::size_t c = 0; c < n; ++c) out(r, c) = X(r, c) / nr;
  }
  std::size_t xid = x.id;
  return g.push(std::move(out), {xid}, [xid, m, n, norms](Graph& g, std::size_t self) {
    const Tensor& go = g.grad(self);
    const Tensor& y = g.value(self);
    Tensor& gx = g.grad_acc(xid);
    for (std::size_t r = 0; r < m; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < n; ++c) dot += go(r, c) * y(r, c);
      for (std::size_t c = 0; c < n; ++c) gx(r, c) += (go(r, c) - y(r, c) * dot) / (*norms)[r];
    }
  });
}

Var attention(Var q, Var k, Var v, const AttentionSpec& spec) {
  using Strided = Eigen::Map<const kernels::RowMat, 0, Eigen::OuterStride<>>;
  using StridedMut = Eigen::Map<kernels::RowMat, 0, Eigen::OuterStride<>>;
  Graph& g = *q.graph;
  const Tensor& Q = q.value();
  const Tensor& K = k.value();
  const Tensor& V = v.value();
  const std::size_t d = Q.cols();
  const std::size_t B = spec.batch, Tq = spec.q_len, Tk = spec.k_len, H = spec.heads;
  if (H == 0 || d % H != 0) throw ShapeError("attention: dim " + std::to_string(d) + " not divisible by heads");
  if (Q.rank() != 2 || Q.rows() != B * Tq) shape_fail("attention(q)", Q, K);
  if (K.rank() != 2 || K.rows() != B * Tk || K.cols() != d) shape_fail("attention(k)", Q, K);
  if (V.shape() != K.shape()) shape_fail("attention(v)", K, V);
  if (spec.causal && Tq != Tk) throw ShapeError("attention: causal mask needs q_len == k_len");
  const std::size_t dh = d / H;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto D = static_cast<Eigen::Index>(d);
  const auto eTq = static_cast<Eigen::Index>(Tq), eTk = static_cast<Eigen::Index>(Tk),
             eDh = static_cast<Eigen::Index>(dh);

  auto probs = std::make_shared<std::vector<double>>(B * H * Tq * Tk);
  Tensor out(Shape{B * Tq, d});
  kernels::RowMat S(eTq, eTk);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t h = 0; h < H; ++h) {
      Strided Qh(Q.ptr() + b * Tq * d + h * dh, eTq, eDh, Eigen::OuterStride<>(D));
      Strided Kh(K.ptr() + b * Tk * d + h * dh, eTk, eDh, Eigen::OuterStride<>(D));
      Strided Vh(V.ptr() + b * Tk * d + h * dh, eTk, eDh, Eigen::OuterStride<>(D));
      S.noalias() = (Qh * Kh.transpose()) * inv_sqrt;
      kernels::RowMap P(probs->data() + (b * H + h) * Tq * Tk, eTq, eTk);
      for (Eigen::Index i = 0; i < eTq; ++i) {
        const Eigen::Index lim = spec.causal ? i + 1 : eTk;
        const double mx = S.row(i).head(lim).maxCoeff();
        double s = 0.0;
        for (Eigen::Index j = 0; j < eTk; ++j) {
          const double e = j < lim ? std::exp(S(i, j) - mx) : 0.0;
          P(i, j) = e;
          s += e;
        }
        P.row(i) /= s;
      }
      StridedMut Oh(out.ptr() + b * Tq * d + h * dh, eTq, eDh, Eigen::OuterStride<>(D));
      Oh.noalias() = P * Vh;
    }
  }

  std::size_t qid = q.id, kid = k.id, vid = v.id;
  return g.push(std::move(out), {qid, kid, vid}, [=](Graph& g, std::size_t self) {
    const Tensor& go = g.grad(self);
    const Tensor& Q = g.value(qid);
    const Tensor& K = g.value(kid);
    const Tensor& V = g.value(vid);
    const bool need_q = g.requires_grad(qid), need_k = g.requires_grad(kid), need_v = g.requires_grad(vid);
    double* gq = need_q ? g.grad_acc(qid).ptr() : nullptr;
    double* gk = need_k ? g.grad_acc(kid).ptr() : nullptr;
    double* gv = need_v ? g.grad_acc(vid).ptr() : nullptr;
    kernels::RowMat dP(eTq, eTk), dS(eTq, eTk);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t h = 0; h < H; ++h) {
        const std::size_t qo = b * Tq * d + h * dh, ko = b * Tk * d + h * dh;
        Strided Qh(Q.ptr() + qo, eTq, eDh, Eigen::OuterStride<>(D));
        Strided Kh(K.ptr() + ko, eTk, eDh, Eigen::OuterStride<>(D));
        Strided Vh(V.ptr() + ko, eTk, eDh, Eigen::OuterStride<>(D));
        Strided dO(go.ptr() + qo, eTq, eDh, Eigen::OuterStride<>(D));
        kernels::ConstRowMap P(probs->data() + (b * H + h) * Tq * Tk, eTq, eTk);
        if (need_v) {
          StridedMut dV(gv + ko, eTk, eDh, Eigen::OuterStride<>(D));
          dV.noalias() += P.transpose() * dO;
        }
        if (!need_q && !need_k) continue;
        dP.noalias() = dO * Vh.transpose();
        for (Eigen::Index i = 0; i < eTq; ++i) {
          const double dot = dP.row(i).dot(P.row(i));
          dS.row(i) = P.row(i).array() * (dP.row(i).array() - dot);
        }
        dS *= inv_sqrt;
        if (need_q) {
          StridedMut dQ(gq + qo, eTq, eDh, Eigen::OuterStride<>(D));
          dQ.noalias() += dS * Kh;
        }
        if (need_k) {
          StridedMut dK(gk + ko, eTk, eDh, Eigen::OuterStride<>(D));
          dK.noalias() += dS.transpose() * Qh;
        }
      }
    }
  });
}

}  // namespace glab
