#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "glab/tensor.hpp"

namespace glab {

// A trainable tensor with its gradient accumulator. Parameters are owned by a
// ParameterSet and referenced (never copied) by graphs.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

class ParameterSet {
 public:
  Parameter& add(std::string name, Tensor value);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;

  std::size_t size() const noexcept { return params_.size(); }
  std::size_t total_elements() const;
  void zero_grad();

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.cbegin(); }
  auto end() const { return params_.cend(); }

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

class Graph;

// Handle to a node of a Graph.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Tensor& grad() const;
};

// Tape of operations recorded in topological order: each node's parents have
// smaller ids. backward() walks the tape once in reverse.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  // With record_gradients=false no backward closures are kept (inference).
  explicit Graph(bool record_gradients = true) : recording_(record_gradients) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor t);
  Var leaf(Tensor t, bool requires_grad = true);
  // One leaf per parameter per graph; repeated calls return the same node.
  Var param(Parameter& p);

  const Tensor& value(std::size_t id) const;
  // Gradient of the last backward pass; zeros when the node received none.
  const Tensor& grad(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool recording() const noexcept { return recording_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Reverse-mode accumulation from a scalar loss. Leaf gradients become
  // readable through grad(); parameter leaves also add into Parameter::grad.
  // A graph may be differentiated once.
  void backward(Var loss);

  // Interface for operation implementations.
  Var push(Tensor value, std::vector<std::size_t> parents, BackwardFn fn);
  bool any_requires_grad(std::initializer_list<Var> vars) const;
  Tensor& grad_acc(std::size_t id);

 private:
  struct Node {
    Tensor value;
    const Tensor* external = nullptr;
    Parameter* param = nullptr;
    Tensor grad;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool requires_grad = false;

    const Tensor& val() const { return external ? *external : value; }
    std::size_t value_size() const { return val().size(); }
  };

  std::vector<Node> nodes_;
  bool recording_;
  bool backward_done_ = false;
  Tensor empty_grad_;
};

// Attention layout: q is (batch*q_len) x dim, k and v are (batch*k_len) x dim,
// heads split dim evenly. causal masks key j > query i (requires q_len == k_len).
struct AttentionSpec {
  std::size_t batch = 1;
  std::size_t q_len = 1;
  std::size_t k_len = 1;
  std::size_t heads = 1;
  bool causal = false;
};

// Differentiable operations. Shape problems raise ShapeError naming both shapes.
Var matmul(Var a, Var b);
Var matmul_nt(Var a, Var b);  // a * b^T
Var transpose(Var a);
// Same shape, row broadcast (b is 1 x cols) or scalar broadcast (b has one element).
Var add(Var a, Var b);
Var sub(Var a, Var b);
// Elementwise, or scalar broadcast when b has one element.
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var exp(Var a);
Var log(Var a);
Var tanh(Var a);
Var gelu(Var a);
Var relu(Var a);
Var square(Var a);
Var clamp_max(Var a, double hi);
Var sum(Var a);
Var mean(Var a);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
Var softmax_rows(Var x);
Var log_softmax_rows(Var x);
// Mean cross-entropy over rows whose target is >= 0; target -1 masks the row.
Var cross_entropy(Var logits, const std::vector<int>& targets);
Var embedding(Var weight, const std::vector<int>& ids);
Var gather_rows(Var x, const std::vector<std::size_t>& rows);
Var concat_rows(Var a, Var b);
Var l2_normalize_rows(Var x);
Var attention(Var q, Var k, Var v, const AttentionSpec& spec);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

}  // namespace glab
