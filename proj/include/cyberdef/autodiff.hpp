#pragma once

#include <deque>
#include <functional>
#include <unordered_map>
#include <span>
#include <vector>

#include "cyberdef/tensor.hpp"

namespace cyberdef::nn {

/// Handle to a node of a Graph.
struct Var {
  int id = -1;
};

/// Row layout of a batched attention call: `samples` groups of
/// `queries` query rows attend over `keys` key rows each.
struct AttentionLayout {
  int samples = 1;
  int queries = 1;
  int keys = 1;
  int heads = 1;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so a reverse
/// sweep over node ids is a valid topological order. A graph built with
/// `record = false` evaluates forward only.
class Graph {
 public:
  explicit Graph(bool record = true) : record_(record) {}

  Var constant(Matrix value);
  /// Leaf that receives a gradient (readable with grad()) but is not a Parameter.
  Var leaf(Matrix value);
  /// Leaf bound to a parameter; backward() accumulates into p.grad. The
  /// value is read in place (not copied) and each parameter maps to one node.
  Var param(Parameter& p);

  const Matrix& value(Var v) const {
    const auto& n = nodes_[static_cast<std::size_t>(v.id)];
    return n.param ? n.param->value : n.value;
  }
  const Matrix& grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].grad; }
  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  Var matmul(Var a, Var b);
  /// x * w + b, with b a 1 x out row broadcast over rows.
  Var linear(Var x, Var w, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  /// Elementwise product.
  Var mul(Var a, Var b);
  Var scale(Var a, double c);
  Var gelu(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var square(Var a);
  Var minimum(Var a, Var b);
  Var clamp(Var a, double lo, double hi);
  /// Row-wise layer normalization with 1 x cols gain and bias.
  Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);

  /// Multi-head scaled dot-product attention with multiplicative gating:
  /// weight(i, j) = gate(i, j) exp(s_ij) / sum_k gate(i, k) exp(s_ik).
  /// Keys with a zero gate are skipped entirely, so they cannot influence
  /// the output. Every query row must have at least one non-zero gate.
  Var attention(Var q, Var k, Var v, Var gate, const AttentionLayout& layout);

  /// Row-wise log-softmax restricted to entries where `available` is
  /// non-zero; other entries are set to kMaskedLogProb with zero gradient.
  Var log_softmax_masked(Var logits, const Matrix& available);
  /// Picks x(r, index[r]) into an R x 1 column.
  Var gather_cols(Var x, std::span<const int> index);
  /// Stacks rows x(index[0]), x(index[1]), ...
  Var gather_rows(Var x, std::span<const int> index);
  /// Output row rows[p][r] takes parts[p] row r. Every output row is covered once.
  Var assemble_rows(std::span<const Var> parts, std::span<const std::vector<int>> rows, int total_rows);
  Var hstack(Var a, Var b);
  Var row_sum(Var a);
  Var sum(Var a);
  Var mean(Var a);

  /// Gradients of the 1x1 `loss` with respect to every node that needs one.
  /// Parameter gradients are added to Parameter::grad.
  void backward(Var loss);

  static constexpr double kMaskedLogProb = -1e30;

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    Parameter* param = nullptr;
    std::function<void(Graph&, const Node&)> backward;
  };

  Var push(Matrix value, bool needs_grad, std::function<void(Graph&, const Node&)> backward = {});
  bool needs(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].needs_grad; }
  Matrix& grad_ref(Var v);

  bool record_;
  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_nodes_;  // stable references while the tape grows
};

/// Result of comparing analytic gradients against central differences.
struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst_parameter;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Builds `loss` on a recording graph, back-propagates, then perturbs every
/// scalar of `params` by +-eps and compares. Relative error uses
/// max(|a|, |b|, 1e-8) as denominator. With `extrapolate` the central
/// differences at eps and 2 eps are Richardson-combined (error O(eps^4)),
/// which allows a larger step and so less roundoff on tiny gradients.
GradCheckResult grad_check(const std::function<Var(Graph&)>& loss, std::span<Parameter* const> params,
                           double eps = 1e-6, bool extrapolate = false);

}  // namespace cyberdef::nn
