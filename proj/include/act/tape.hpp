#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "act/matrix.hpp"

namespace act {

using NodeId = std::int32_t;

// Reverse-mode autodiff over a DAG of matrix nodes. A tape is built once,
// then reused: leaves can be rebound with set_value and the forward pass
// rerun, which is what makes per-step training cheap.
//
// Gradient accumulation is exactly ordered. Each node collects one subtotal
// per consumer (filled in the consumer's input-slot order) and reduces the
// subtotals with the left-to-right pairwise tree, ordered by consumer id.
// Construction order therefore fixes every floating-point reduction, and the
// gradient of a tree-summed batch loss equals the tree sum of per-element
// gradients bit for bit.
class Tape {
public:
  // Leaves. Parameters participate in backward; inputs and constants do not,
  // which is how a detached quantity is represented.
  NodeId input(Matrix v);
  NodeId parameter(Matrix v);
  NodeId constant(Matrix v) { return input(std::move(v)); }

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId matmul(NodeId a, NodeId b);
  NodeId relu(NodeId a);
  NodeId scale(NodeId a, double c);
  NodeId dot(NodeId a, NodeId b);  // Frobenius inner product, 1x1 result

  // Elementwise sum of same-shaped nodes in pairwise-tree order.
  NodeId sum(std::span<const NodeId> xs);

  // Maps a column vector onto the norm shell [b1, b2]: identity inside the
  // shell, radial rescaling outside, and the zero vector goes to the first
  // basis vector (clamped into the shell).
  NodeId project_norm(NodeId a, double b1, double b2);

  // Column vectors (each d x 1) stacked as the rows of an n x d matrix.
  NodeId stack_rows(std::span<const NodeId> xs);

  // Per column across rows: (x - mean) / std with the n-1 denominator.
  // Fails forward if a column's std falls below 1e-12.
  NodeId standardize_columns(NodeId a);

  // A^T B / n for two n-row matrices, every entry a tree sum over rows.
  NodeId cross_correlation(NodeId a, NodeId b);

  // Batched variants treating the columns of an r x n matrix as n
  // independent samples. They keep per-pair graphs out of the training loop:
  // one node per layer instead of one subgraph per sample.

  // A (r x n) plus a bias column b (r x 1) added to every column of A.
  NodeId add_broadcast(NodeId a, NodeId b);

  // project_norm applied to every column of an r x n matrix.
  NodeId project_norm_columns(NodeId a, double b1, double b2);

  // Per row across the n columns: (x - mean) / std with the n-1 denominator.
  // Fails forward if a row's std falls below 1e-12.
  NodeId standardize_rows(NodeId a);

  // A B^T / n for A (p x n) and B (q x n), every entry a tree sum over the
  // n columns. Equals cross_correlation of the transposed inputs.
  NodeId cross_correlation_cols(NodeId a, NodeId b);

  // Rebinds a leaf's value in place; shape must match.
  void set_value(NodeId leaf, const Matrix& v);
  Matrix& value_mut(NodeId leaf);  // leaf only; used by optimizer updates

  void forward();                  // all nodes
  void forward_from(NodeId first);  // nodes [first, end), for staged graphs
  double scalar(NodeId id) const;   // value of a 1x1 node
  const Matrix& value(NodeId id) const;

  // Seeds d(out)/d(out) = 1 and sweeps the whole tape. out must be 1x1.
  void backward(NodeId out);
  const Matrix& gradient(NodeId id) const;  // valid after backward

  // Central-difference check of d(out)/d(leaf): perturbs every entry of the
  // leaf by +/- h and compares against the analytic gradient. Returns the
  // largest error |fd - g| / max(1, |fd|, |g|).
  double finite_difference_check(NodeId out, NodeId leaf, double h);

  std::size_t node_count() const { return nodes_.size(); }
  std::vector<NodeId> parameters() const;

private:
  enum class Op : std::uint8_t {
    kLeaf,
    kAdd,
    kSub,
    kMatmul,
    kRelu,
    kScale,
    kDot,
    kSum,
    kProjectNorm,
    kStackRows,
    kStandardizeColumns,
    kCrossCorrelation,
    kAddBroadcast,
    kProjectNormCols,
    kStandardizeRows,
    kCrossCorrelationCols,
  };

  struct Contribution {
    NodeId consumer = -1;
    Matrix accum;
  };

  struct Node {
    Op op = Op::kLeaf;
    NodeId a = -1, b = -1;
    std::vector<NodeId> list;  // kSum / kStackRows children
    double c0 = 0.0, c1 = 0.0;
    double aux0 = 0.0;          // projection: cached input norm
    std::vector<double> aux;    // standardize: cached stds; column
                                // projection: cached per-column norms
    Matrix value;
    Matrix grad;
    std::vector<Contribution> contribs;
    std::size_t contrib_used = 0;
    bool requires_grad = false;
    bool is_param = false;
  };

  NodeId push(Node n);
  void compute(Node& n);
  // Returns the accumulation buffer for target's gradient contribution from
  // consumer, zeroed when the (target, consumer) pair is first touched in
  // this pass.
  Matrix& contribute_buffer(NodeId target, NodeId consumer);
  void reduce_contributions(Node& n);
  const Node& node(NodeId id) const;
  Node& node(NodeId id);

  std::vector<Node> nodes_;
  bool has_forward_ = false;
};

}  // namespace act
