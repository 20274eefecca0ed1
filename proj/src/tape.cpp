#include "act/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "act/errors.hpp"

namespace act {

namespace {

[[noreturn]] void graph_error(const char* op, NodeId id, const char* what) {
  throw std::invalid_argument(std::string("tape: ") + op + " node " +
                              std::to_string(id) + ": " + what);
}

constexpr double kZeroNorm = 1e-300;
constexpr double kMinStd = 1e-12;

}  // namespace

const Tape::Node& Tape::node(NodeId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
    throw std::invalid_argument("tape: node id out of range");
  return nodes_[static_cast<std::size_t>(id)];
}

Tape::Node& Tape::node(NodeId id) {
  return const_cast<Node&>(static_cast<const Tape*>(this)->node(id));
}

NodeId Tape::push(Node n) {
  const NodeId id = static_cast<NodeId>(nodes_.size());
  if (n.op != Op::kLeaf) {
    bool rg = false;
    if (n.a >= 0) rg = rg || node(n.a).requires_grad;
    if (n.b >= 0) rg = rg || node(n.b).requires_grad;
    for (NodeId c : n.list) rg = rg || node(c).requires_grad;
    n.requires_grad = rg;
  }
  n.grad = Matrix(n.value.rows(), n.value.cols());
  nodes_.push_back(std::move(n));
  has_forward_ = false;
  return id;
}

NodeId Tape::input(Matrix v) {
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(v);
  return push(std::move(n));
}

NodeId Tape::parameter(Matrix v) {
  Node n;
  n.op = Op::kLeaf;
  n.is_param = true;
  n.requires_grad = true;
  n.value = std::move(v);
  return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
  const NodeId id = static_cast<NodeId>(nodes_.size());
  if (!node(a).value.same_shape(node(b).value))
    graph_error("add", id, "operand shapes differ");
  Node n;
  n.op = Op::kAdd;
  n.a = a;
  n.b = b;
  n.value = Matrix(node(a).value.rows(), node(a).value.cols());
  return push(std::move(n));
}

NodeId Tape::sub(NodeId a, NodeId b) {
  const NodeId id = static_cast<NodeId>(nodes_.size());
  if (!node(a).value.same_shape(node(b).value))
    graph_error("sub", id, "operand shapes differ");
  Node n;
  n.op = Op::kSub;
  n.a = a;
  n.b = b;
  n.value = Matrix(node(a).value.rows(), node(a).value.cols());
  return push(std::move(n));
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  const NodeId id = static_cast<NodeId>(nodes_.size());
  if (node(a).value.cols() != node(b).value.rows())
    graph_error("matmul", id, "inner dimensions disagree");
  Node n;
  n.op = Op::kMatmul;
  n.a = a;
  n.b = b;
  n.value = Matrix(node(a).value.rows(), node(b).value.cols());
  return push(std::move(n));
}

NodeId Tape::relu(NodeId a) {
  Node n;
  n.op = Op::kRelu;
  n.a = a;
  n.value = Matrix(node(a).value.rows(), node(a).value.cols());
  return push(std::move(n));
}

NodeId Tape::scale(NodeId a, double c) {
  Node n;
  n.op = Op::kScale;
  n.a = a;
  n.c0 = c;
  n.value = Matrix(node(a).value.rows(), node(a).value.cols());
  return push(std::move(n));
}

NodeId Tape::dot(NodeId a, NodeId b) {
  const NodeId id = static_cast<NodeId>(nodes_.size());
  if (!node(a).value.same_shape(node(b).value))
    graph_error("dot", id, "operand shapes differ");
  Node n;
  n.op = Op::kDot;
  n.a = a;
  n.b = b;
  n.value = Matrix(1, 1);
  return push(std::move(n));
}

NodeId Tape::sum(std::span<const NodeId> xs) {
  const NodeId id = static_cast<NodeId>(nodes_.size());
  if (xs.empty()) graph_error("sum", id, "no children");
  for (NodeId c : xs)
    if (!node(c).value.same_shape(node(xs[0]).value))
      graph_error("sum", id, "child shapes differ");
  Node n;
  n.op = Op::kSum;
  n.list.assign(xs.begin(), xs.end());
  n.value = Matrix(node(xs[0]).value.rows(), node(xs[0]).value.cols());
  return push(std::move(n));
}

NodeId Tape::project_norm(NodeId a, double b1, double b2) {
  const NodeId id = static_cast<NodeId>(nodes_.size());
  if (node(a).value.cols() != 1)
    graph_error("project_norm", id, "operand is not a column vector");
  if (!(b1 > 0.0) || b2 < b1)
    graph_error("project_norm", id, "invalid norm bounds");
  Node n;
  n.op = Op::kProjectNorm;
  n.a = a;
  n.c0 = b1;
  n.c1 = b2;
  n.value = Matrix(node(a).value.rows(), 1);
  return push(std::move(n));
}

NodeId Tape::stack_rows(std::span<const NodeId> xs) {
  const NodeId id = static_cast<NodeId>(nodes_.size());
  if (xs.empty()) graph_error("stack_rows", id, "no children");
  for (NodeId c : xs) {
    if (node(c).value.cols() != 1)
      graph_error("stack_rows", id, "child is not a column vector");
    if (node(c).value.rows() != node(xs[0]).value.rows())
      graph_error("stack_rows", id, "child lengths differ");
  }
  Node n;
  n.op = Op::kStackRows;
  n.list.assign(xs.begin(), xs.end());
  n.value = Matrix(xs.size(), node(xs[0]).value.rows());
  return push(std::move(n));
}

NodeId Tape::standardize_columns(NodeId a) {
  const NodeId id = static_cast<NodeId>(nodes_.size());
  if (node(a).value.rows() < 2)
    graph_error("standardize_columns", id, "needs at least two rows");
  Node n;
  n.op = Op::kStandardizeColumns;
  n.a = a;
  n.aux.resize(node(a).value.cols());
  n.value = Matrix(node(a).value.rows(), node(a).value.cols());
  return push(std::move(n));
}

NodeId Tape::cross_correlation(NodeId a, NodeId b) {
  const NodeId id = static_cast<NodeId>(nodes_.size());
  if (node(a).value.rows() != node(b).value.rows())
    graph_error("cross_correlation", id, "row counts differ");
  Node n;
  n.op = Op::kCrossCorrelation;
  n.a = a;
  n.b = b;
  n.value = Matrix(node(a).value.cols(), node(b).value.cols());
  return push(std::move(n));
}

NodeId Tape::add_broadcast(NodeId a, NodeId b) {
  const NodeId id = static_cast<NodeId>(nodes_.size());
  if (node(b).value.cols() != 1)
    graph_error("add_broadcast", id, "bias is not a column vector");
  if (node(b).value.rows() != node(a).value.rows())
    graph_error("add_broadcast", id, "bias length differs from row count");
  Node n;
  n.op = Op::kAddBroadcast;
  n.a = a;
  n.b = b;
  n.value = Matrix(node(a).value.rows(), node(a).value.cols());
  return push(std::move(n));
}

NodeId Tape::project_norm_columns(NodeId a, double b1, double b2) {
  const NodeId id = static_cast<NodeId>(nodes_.size());
  if (!(b1 > 0.0) || b2 < b1)
    graph_error("project_norm_columns", id, "invalid norm bounds");
  Node n;
  n.op = Op::kProjectNormCols;
  n.a = a;
  n.c0 = b1;
  n.c1 = b2;
  n.aux.resize(node(a).value.cols());
  n.value = Matrix(node(a).value.rows(), node(a).value.cols());
  return push(std::move(n));
}

NodeId Tape::standardize_rows(NodeId a) {
  const NodeId id = static_cast<NodeId>(nodes_.size());
  if (node(a).value.cols() < 2)
    graph_error("standardize_rows", id, "needs at least two columns");
  Node n;
  n.op = Op::kStandardizeRows;
  n.a = a;
  n.aux.resize(node(a).value.rows());
  n.value = Matrix(node(a).value.rows(), node(a).value.cols());
  return push(std::move(n));
}

NodeId Tape::cross_correlation_cols(NodeId a, NodeId b) {
  const NodeId id = static_cast<NodeId>(nodes_.size());
  if (node(a).value.cols() != node(b).value.cols())
    graph_error("cross_correlation_cols", id, "column counts differ");
  Node n;
  n.op = Op::kCrossCorrelationCols;
  n.a = a;
  n.b = b;
  n.value = Matrix(node(a).value.rows(), node(b).value.rows());
  return push(std::move(n));
}

void Tape::set_value(NodeId leaf, const Matrix& v) {
  Node& n = node(leaf);
  if (n.op != Op::kLeaf)
    throw std::invalid_argument("tape: set_value on a non-leaf node");
  if (!n.value.same_shape(v))
    throw std::invalid_argument("tape: set_value shape mismatch");
  n.value = v;
}

Matrix& Tape::value_mut(NodeId leaf) {
  Node& n = node(leaf);
  if (n.op != Op::kLeaf)
    throw std::invalid_argument("tape: value_mut on a non-leaf node");
  return n.value;
}

void Tape::compute(Node& n) {
  switch (n.op) {
    case Op::kLeaf:
      break;
    case Op::kAdd: {
      const Matrix& va = node(n.a).value;
      const Matrix& vb = node(n.b).value;
      for (std::size_t i = 0; i < n.value.size(); ++i)
        n.value[i] = va[i] + vb[i];
      break;
    }
    case Op::kSub: {
      const Matrix& va = node(n.a).value;
      const Matrix& vb = node(n.b).value;
      for (std::size_t i = 0; i < n.value.size(); ++i)
        n.value[i] = va[i] - vb[i];
      break;
    }
    case Op::kMatmul: {
      const Matrix& va = node(n.a).value;
      const Matrix& vb = node(n.b).value;
      n.value.fill(0.0);
      for (std::size_t i = 0; i < va.rows(); ++i)
        for (std::size_t k = 0; k < va.cols(); ++k) {
          const double aik = va.at(i, k);
          for (std::size_t j = 0; j < vb.cols(); ++j)
            n.value.at(i, j) += aik * vb.at(k, j);
        }
      break;
    }
    case Op::kRelu: {
      const Matrix& va = node(n.a).value;
      for (std::size_t i = 0; i < n.value.size(); ++i)
        n.value[i] = va[i] > 0.0 ? va[i] : 0.0;
      break;
    }
    case Op::kScale: {
      const Matrix& va = node(n.a).value;
      for (std::size_t i = 0; i < n.value.size(); ++i)
        n.value[i] = n.c0 * va[i];
      break;
    }
    case Op::kDot: {
      const Matrix& va = node(n.a).value;
      const Matrix& vb = node(n.b).value;
      double s = 0.0;
      for (std::size_t i = 0; i < va.size(); ++i) s += va[i] * vb[i];
      n.value[0] = s;
      break;
    }
    case Op::kSum: {
      // Elementwise pairwise tree over the children.
      thread_local std::vector<double> scratch;
      scratch.resize(n.list.size());
      for (std::size_t e = 0; e < n.value.size(); ++e) {
        for (std::size_t j = 0; j < n.list.size(); ++j)
          scratch[j] = node(n.list[j]).value[e];
        n.value[e] = tree_sum(scratch);
      }
      break;
    }
    case Op::kProjectNorm: {
      const Matrix& va = node(n.a).value;
      double s = 0.0;
      for (std::size_t i = 0; i < va.size(); ++i) s += va[i] * va[i];
      const double nrm = std::sqrt(s);
      n.aux0 = nrm;
      if (nrm < kZeroNorm) {
        // Degenerate input: pick the first basis vector, clamped to the shell.
        n.value.fill(0.0);
        double r = 1.0;
        if (r < n.c0) r = n.c0;
        if (r > n.c1) r = n.c1;
        n.value[0] = r;
      } else if (nrm < n.c0) {
        const double f = n.c0 / nrm;
        for (std::size_t i = 0; i < va.size(); ++i) n.value[i] = f * va[i];
      } else if (nrm > n.c1) {
        const double f = n.c1 / nrm;
        for (std::size_t i = 0; i < va.size(); ++i) n.value[i] = f * va[i];
      } else {
        for (std::size_t i = 0; i < va.size(); ++i) n.value[i] = va[i];
      }
      break;
    }
    case Op::kStackRows: {
      for (std::size_t i = 0; i < n.list.size(); ++i) {
        const Matrix& c = node(n.list[i]).value;
        for (std::size_t j = 0; j < c.size(); ++j) n.value.at(i, j) = c[j];
      }
      break;
    }
    case Op::kStandardizeColumns: {
      const Matrix& va = node(n.a).value;
      const std::size_t rows = va.rows(), cols = va.cols();
      thread_local std::vector<double> col;
      col.resize(rows);
      for (std::size_t j = 0; j < cols; ++j) {
        for (std::size_t i = 0; i < rows; ++i) col[i] = va.at(i, j);
        const double mean = tree_sum(col) / static_cast<double>(rows);
        for (std::size_t i = 0; i < rows; ++i) {
          const double c = va.at(i, j) - mean;
          col[i] = c * c;
        }
        const double var = tree_sum(col) / static_cast<double>(rows - 1);
        const double sd = std::sqrt(var);
        if (sd < kMinStd)
          throw NumericError("standardize: column " + std::to_string(j) +
                             " has zero variance");
        n.aux[j] = sd;
        const double inv = 1.0 / sd;
        for (std::size_t i = 0; i < rows; ++i)
          n.value.at(i, j) = (va.at(i, j) - mean) * inv;
      }
      break;
    }
    case Op::kCrossCorrelation: {
      const Matrix& va = node(n.a).value;
      const Matrix& vb = node(n.b).value;
      const std::size_t rows = va.rows();
      const double inv = 1.0 / static_cast<double>(rows);
      thread_local std::vector<double> prod;
      prod.resize(rows);
      for (std::size_t p = 0; p < va.cols(); ++p)
        for (std::size_t q = 0; q < vb.cols(); ++q) {
          for (std::size_t i = 0; i < rows; ++i)
            prod[i] = va.at(i, p) * vb.at(i, q);
          n.value.at(p, q) = tree_sum(prod) * inv;
        }
      break;
    }
    case Op::kAddBroadcast: {
      const Matrix& va = node(n.a).value;
      const Matrix& vb = node(n.b).value;
      for (std::size_t i = 0; i < va.rows(); ++i) {
        const double bi = vb[i];
        for (std::size_t j = 0; j < va.cols(); ++j)
          n.value.at(i, j) = va.at(i, j) + bi;
      }
      break;
    }
    case Op::kProjectNormCols: {
      const Matrix& va = node(n.a).value;
      const std::size_t rows = va.rows(), cols = va.cols();
      for (std::size_t j = 0; j < cols; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < rows; ++i) s += va.at(i, j) * va.at(i, j);
        const double nrm = std::sqrt(s);
        n.aux[j] = nrm;
        if (nrm < kZeroNorm) {
          for (std::size_t i = 0; i < rows; ++i) n.value.at(i, j) = 0.0;
          double r = 1.0;
          if (r < n.c0) r = n.c0;
          if (r > n.c1) r = n.c1;
          n.value.at(0, j) = r;
        } else if (nrm < n.c0) {
          const double f = n.c0 / nrm;
          for (std::size_t i = 0; i < rows; ++i)
            n.value.at(i, j) = f * va.at(i, j);
        } else if (nrm > n.c1) {
          const double f = n.c1 / nrm;
          for (std::size_t i = 0; i < rows; ++i)
            n.value.at(i, j) = f * va.at(i, j);
        } else {
          for (std::size_t i = 0; i < rows; ++i)
            n.value.at(i, j) = va.at(i, j);
        }
      }
      break;
    }
    case Op::kStandardizeRows: {
      const Matrix& va = node(n.a).value;
      const std::size_t rows = va.rows(), cols = va.cols();
      thread_local std::vector<double> row;
      row.resize(cols);
      for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) row[j] = va.at(i, j);
        const double mean = tree_sum(row) / static_cast<double>(cols);
        for (std::size_t j = 0; j < cols; ++j) {
          const double c = va.at(i, j) - mean;
          row[j] = c * c;
        }
        const double var = tree_sum(row) / static_cast<double>(cols - 1);
        const double sd = std::sqrt(var);
        if (sd < kMinStd)
          throw NumericError("standardize: row " + std::to_string(i) +
                             " has zero variance");
        n.aux[i] = sd;
        const double inv = 1.0 / sd;
        for (std::size_t j = 0; j < cols; ++j)
          n.value.at(i, j) = (va.at(i, j) - mean) * inv;
      }
      break;
    }
    case Op::kCrossCorrelationCols: {
      const Matrix& va = node(n.a).value;
      const Matrix& vb = node(n.b).value;
      const std::size_t cols = va.cols();
      const double inv = 1.0 / static_cast<double>(cols);
      thread_local std::vector<double> prod;
      prod.resize(cols);
      for (std::size_t p = 0; p < va.rows(); ++p)
        for (std::size_t q = 0; q < vb.rows(); ++q) {
          for (std::size_t i = 0; i < cols; ++i)
            prod[i] = va.at(p, i) * vb.at(q, i);
          n.value.at(p, q) = tree_sum(prod) * inv;
        }
      break;
    }
  }
}

void Tape::forward() {
  for (Node& n : nodes_) compute(n);
  has_forward_ = true;
}

void Tape::forward_from(NodeId first) {
  if (!has_forward_)
    throw std::logic_error("tape: forward_from before a full forward pass");
  for (std::size_t i = static_cast<std::size_t>(first); i < nodes_.size(); ++i)
    compute(nodes_[i]);
}

double Tape::scalar(NodeId id) const {
  const Node& n = node(id);
  if (n.value.size() != 1)
    throw std::invalid_argument("tape: scalar on a non-1x1 node");
  return n.value[0];
}

const Matrix& Tape::value(NodeId id) const { return node(id).value; }

const Matrix& Tape::gradient(NodeId id) const { return node(id).grad; }

Matrix& Tape::contribute_buffer(NodeId target, NodeId consumer) {
  Node& t = node(target);
  if (t.contrib_used > 0 &&
      t.contribs[t.contrib_used - 1].consumer == consumer)
    return t.contribs[t.contrib_used - 1].accum;
  if (t.contrib_used == t.contribs.size()) t.contribs.emplace_back();
  Contribution& c = t.contribs[t.contrib_used++];
  c.consumer = consumer;
  if (!c.accum.same_shape(t.value))
    c.accum = Matrix(t.value.rows(), t.value.cols());
  else
    c.accum.fill(0.0);
  return c.accum;
}

void Tape::reduce_contributions(Node& n) {
  const std::size_t u = n.contrib_used;
  if (u == 0) return;
  // Contributions arrived in descending consumer order; reduce them in
  // ascending order with the pairwise tree, in place.
  auto phys = [&](std::size_t logical) -> Matrix& {
    return n.contribs[u - 1 - logical].accum;
  };
  for (std::size_t gap = 1; gap < u; gap *= 2)
    for (std::size_t j = 0; j + gap < u; j += 2 * gap) {
      Matrix& dst = phys(j);
      const Matrix& src = phys(j + gap);
      for (std::size_t e = 0; e < dst.size(); ++e) dst[e] += src[e];
    }
  n.grad = phys(0);
}

void Tape::backward(NodeId out) {
  if (!has_forward_)
    throw std::logic_error("tape: backward before forward");
  {
    const Node& o = node(out);
    if (o.value.size() != 1)
      throw std::invalid_argument("tape: backward output must be 1x1");
  }
  for (Node& n : nodes_) {
    n.contrib_used = 0;
    n.grad.fill(0.0);
  }
  node(out).grad.fill(1.0);

  for (NodeId id = out; id >= 0; --id) {
    Node& n = node(id);
    if (id != out) {
      if (n.contrib_used == 0) continue;  // no gradient reaches this node
      reduce_contributions(n);
    }
    if (!n.requires_grad || n.op == Op::kLeaf) continue;
    const Matrix& g = n.grad;

    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kAdd: {
        if (node(n.a).requires_grad) {
          Matrix& buf = contribute_buffer(n.a, id);
          for (std::size_t e = 0; e < g.size(); ++e) buf[e] += g[e];
        }
        if (node(n.b).requires_grad) {
          Matrix& buf = contribute_buffer(n.b, id);
          for (std::size_t e = 0; e < g.size(); ++e) buf[e] += g[e];
        }
        break;
      }
      case Op::kSub: {
        if (node(n.a).requires_grad) {
          Matrix& buf = contribute_buffer(n.a, id);
          for (std::size_t e = 0; e < g.size(); ++e) buf[e] += g[e];
        }
        if (node(n.b).requires_grad) {
          Matrix& buf = contribute_buffer(n.b, id);
          for (std::size_t e = 0; e < g.size(); ++e) buf[e] -= g[e];
        }
        break;
      }
      case Op::kMatmul: {
        const Matrix& va = node(n.a).value;
        const Matrix& vb = node(n.b).value;
        if (node(n.a).requires_grad) {
          // dA = g . B^T
          Matrix& buf = contribute_buffer(n.a, id);
          for (std::size_t i = 0; i < va.rows(); ++i)
            for (std::size_t j = 0; j < vb.cols(); ++j) {
              const double gij = g.at(i, j);
              if (gij == 0.0) continue;
              for (std::size_t k = 0; k < va.cols(); ++k)
                buf.at(i, k) += gij * vb.at(k, j);
            }
        }
        if (node(n.b).requires_grad) {
          // dB = A^T . g
          Matrix& buf = contribute_buffer(n.b, id);
          for (std::size_t i = 0; i < va.rows(); ++i)
            for (std::size_t k = 0; k < va.cols(); ++k) {
              const double aik = va.at(i, k);
              if (aik == 0.0) continue;
              for (std::size_t j = 0; j < vb.cols(); ++j)
                buf.at(k, j) += aik * g.at(i, j);
            }
        }
        break;
      }
      case Op::kRelu: {
        const Matrix& va = node(n.a).value;
        Matrix& buf = contribute_buffer(n.a, id);
        for (std::size_t e = 0; e < g.size(); ++e)
          if (va[e] > 0.0) buf[e] += g[e];
        break;
      }
      case Op::kScale: {
        Matrix& buf = contribute_buffer(n.a, id);
        for (std::size_t e = 0; e < g.size(); ++e) buf[e] += n.c0 * g[e];
        break;
      }
      case Op::kDot: {
        const double g0 = g[0];
        const Matrix& va = node(n.a).value;
        const Matrix& vb = node(n.b).value;
        if (node(n.a).requires_grad) {
          Matrix& buf = contribute_buffer(n.a, id);
          for (std::size_t e = 0; e < vb.size(); ++e) buf[e] += g0 * vb[e];
        }
        if (node(n.b).requires_grad) {
          Matrix& buf = contribute_buffer(n.b, id);
          for (std::size_t e = 0; e < va.size(); ++e) buf[e] += g0 * va[e];
        }
        break;
      }
      case Op::kSum: {
        for (NodeId c : n.list) {
          if (!node(c).requires_grad) continue;
          Matrix& buf = contribute_buffer(c, id);
          for (std::size_t e = 0; e < g.size(); ++e) buf[e] += g[e];
        }
        break;
      }
      case Op::kProjectNorm: {
        if (!node(n.a).requires_grad) break;
        const Matrix& va = node(n.a).value;
        const double nrm = n.aux0;
        Matrix& buf = contribute_buffer(n.a, id);
        if (nrm < kZeroNorm) break;  // constant branch, zero gradient
        double f = 0.0;
        if (nrm < n.c0)
          f = n.c0;
        else if (nrm > n.c1)
          f = n.c1;
        if (f == 0.0) {
          // Inside the shell: identity.
          for (std::size_t e = 0; e < g.size(); ++e) buf[e] += g[e];
        } else {
          // z = f * a / |a|; dz/da = (f/|a|)(I - u u^T), u = a/|a|.
          const double inv = 1.0 / nrm;
          double ug = 0.0;
          for (std::size_t e = 0; e < g.size(); ++e)
            ug += va[e] * inv * g[e];
          const double fi = f * inv;
          for (std::size_t e = 0; e < g.size(); ++e)
            buf[e] += fi * (g[e] - va[e] * inv * ug);
        }
        break;
      }
      case Op::kStackRows: {
        for (std::size_t i = 0; i < n.list.size(); ++i) {
          if (!node(n.list[i]).requires_grad) continue;
          Matrix& buf = contribute_buffer(n.list[i], id);
          for (std::size_t j = 0; j < buf.size(); ++j)
            buf[j] += g.at(i, j);
        }
        break;
      }
      case Op::kStandardizeColumns: {
        if (!node(n.a).requires_grad) break;
        const std::size_t rows = n.value.rows(), cols = n.value.cols();
        Matrix& buf = contribute_buffer(n.a, id);
        thread_local std::vector<double> tmp;
        tmp.resize(rows);
        for (std::size_t j = 0; j < cols; ++j) {
          const double inv = 1.0 / n.aux[j];
          for (std::size_t i = 0; i < rows; ++i) tmp[i] = g.at(i, j);
          const double gmean = tree_sum(tmp) / static_cast<double>(rows);
          for (std::size_t i = 0; i < rows; ++i)
            tmp[i] = g.at(i, j) * n.value.at(i, j);
          const double gz = tree_sum(tmp) / static_cast<double>(rows - 1);
          for (std::size_t i = 0; i < rows; ++i)
            buf.at(i, j) +=
                inv * (g.at(i, j) - gmean - n.value.at(i, j) * gz);
        }
        break;
      }
      case Op::kCrossCorrelation: {
        const Matrix& va = node(n.a).value;
        const Matrix& vb = node(n.b).value;
        const std::size_t rows = va.rows();
        const double inv = 1.0 / static_cast<double>(rows);
        if (node(n.a).requires_grad) {
          Matrix& buf = contribute_buffer(n.a, id);
          for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t p = 0; p < va.cols(); ++p) {
              double s = 0.0;
              for (std::size_t q = 0; q < vb.cols(); ++q)
                s += n.grad.at(p, q) * vb.at(i, q);
              buf.at(i, p) += inv * s;
            }
        }
        if (node(n.b).requires_grad) {
          Matrix& buf = contribute_buffer(n.b, id);
          for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t q = 0; q < vb.cols(); ++q) {
              double s = 0.0;
              for (std::size_t p = 0; p < va.cols(); ++p)
                s += n.grad.at(p, q) * va.at(i, p);
              buf.at(i, q) += inv * s;
            }
        }
        break;
      }
      case Op::kAddBroadcast: {
        if (node(n.a).requires_grad) {
          Matrix& buf = contribute_buffer(n.a, id);
          for (std::size_t e = 0; e < g.size(); ++e) buf[e] += g[e];
        }
        if (node(n.b).requires_grad) {
          Matrix& buf = contribute_buffer(n.b, id);
          thread_local std::vector<double> tmp;
          tmp.resize(g.cols());
          for (std::size_t i = 0; i < g.rows(); ++i) {
            for (std::size_t j = 0; j < g.cols(); ++j) tmp[j] = g.at(i, j);
            buf[i] += tree_sum(tmp);
          }
        }
        break;
      }
      case Op::kProjectNormCols: {
        if (!node(n.a).requires_grad) break;
        const Matrix& va = node(n.a).value;
        const std::size_t rows = va.rows(), cols = va.cols();
        Matrix& buf = contribute_buffer(n.a, id);
        for (std::size_t j = 0; j < cols; ++j) {
          const double nrm = n.aux[j];
          if (nrm < kZeroNorm) continue;  // constant branch, zero gradient
          double f = 0.0;
          if (nrm < n.c0)
            f = n.c0;
          else if (nrm > n.c1)
            f = n.c1;
          if (f == 0.0) {
            for (std::size_t i = 0; i < rows; ++i)
              buf.at(i, j) += g.at(i, j);
          } else {
            const double inv = 1.0 / nrm;
            double ug = 0.0;
            for (std::size_t i = 0; i < rows; ++i)
              ug += va.at(i, j) * inv * g.at(i, j);
            const double fi = f * inv;
            for (std::size_t i = 0; i < rows; ++i)
              buf.at(i, j) +=
                  fi * (g.at(i, j) - va.at(i, j) * inv * ug);
          }
        }
        break;
      }
      case Op::kStandardizeRows: {
        if (!node(n.a).requires_grad) break;
        const std::size_t rows = n.value.rows(), cols = n.value.cols();
        Matrix& buf = contribute_buffer(n.a, id);
        thread_local std::vector<double> tmp;
        tmp.resize(cols);
        for (std::size_t i = 0; i < rows; ++i) {
          const double inv = 1.0 / n.aux[i];
          for (std::size_t j = 0; j < cols; ++j) tmp[j] = g.at(i, j);
          const double gmean = tree_sum(tmp) / static_cast<double>(cols);
          for (std::size_t j = 0; j < cols; ++j)
            tmp[j] = g.at(i, j) * n.value.at(i, j);
          const double gz = tree_sum(tmp) / static_cast<double>(cols - 1);
          for (std::size_t j = 0; j < cols; ++j)
            buf.at(i, j) +=
                inv * (g.at(i, j) - gmean - n.value.at(i, j) * gz);
        }
        break;
      }
      case Op::kCrossCorrelationCols: {
        const Matrix& va = node(n.a).value;
        const Matrix& vb = node(n.b).value;
        const std::size_t cols = va.cols();
        const double inv = 1.0 / static_cast<double>(cols);
        if (node(n.a).requires_grad) {
          Matrix& buf = contribute_buffer(n.a, id);
          for (std::size_t p = 0; p < va.rows(); ++p)
            for (std::size_t i = 0; i < cols; ++i) {
              double s = 0.0;
              for (std::size_t q = 0; q < vb.rows(); ++q)
                s += n.grad.at(p, q) * vb.at(q, i);
              buf.at(p, i) += inv * s;
            }
        }
        if (node(n.b).requires_grad) {
          Matrix& buf = contribute_buffer(n.b, id);
          for (std::size_t q = 0; q < vb.rows(); ++q)
            for (std::size_t i = 0; i < cols; ++i) {
              double s = 0.0;
              for (std::size_t p = 0; p < va.rows(); ++p)
                s += n.grad.at(p, q) * va.at(p, i);
              buf.at(q, i) += inv * s;
            }
        }
        break;
      }
    }
  }
}

double Tape::finite_difference_check(NodeId out, NodeId leaf, double h) {
  Node& lf = node(leaf);
  if (lf.op != Op::kLeaf || !lf.is_param)
    throw std::invalid_argument(
        "tape: finite_difference_check target must be a parameter leaf");
  forward();
  backward(out);
  const Matrix analytic = lf.grad;  // copy; later passes overwrite

  double max_err = 0.0;
  for (std::size_t e = 0; e < lf.value.size(); ++e) {
    const double orig = lf.value[e];
    lf.value[e] = orig + h;
    forward();
    const double fp = scalar(out);
    lf.value[e] = orig - h;
    forward();
    const double fm = scalar(out);
    lf.value[e] = orig;
    const double fd = (fp - fm) / (2.0 * h);
    const double g = analytic[e];
    double denom = 1.0;
    if (std::abs(fd) > denom) denom = std::abs(fd);
    if (std::abs(g) > denom) denom = std::abs(g);
    const double err = std::abs(fd - g) / denom;
    if (err > max_err) max_err = err;
  }
  forward();  // restore values downstream of the leaf
  return max_err;
}

std::vector<NodeId> Tape::parameters() const {
  std::vector<NodeId> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].is_param) out.push_back(static_cast<NodeId>(i));
  return out;
}

}  // namespace act
