#include "memlora/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace memlora {

namespace {

std::shared_ptr<TensorNode> make_node(Matrix value, std::vector<std::shared_ptr<TensorNode>> parents,
                                      std::function<void(TensorNode&)> backprop) {
  auto node = std::make_shared<TensorNode>();
  node->value = std::move(value);
  node->parents = std::move(parents);
  node->requires_grad = false;
  for (const auto& p : node->parents)
    if (p->requires_grad) node->requires_grad = true;
  if (node->requires_grad) node->backprop = std::move(backprop);
  return node;
}

Tensor wrap(std::shared_ptr<TensorNode> node) { return Tensor(std::move(node)); }

void accumulate(const std::shared_ptr<TensorNode>& parent, const Matrix& g) {
  if (!parent->requires_grad) return;
  parent->ensure_grad();
  parent->grad += g;
}

}  // namespace

Tensor::Tensor(Matrix m, bool requires_grad) : node_(std::make_shared<TensorNode>()) {
  node_->value = std::move(m);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Eigen::Index rows, Eigen::Index cols, bool requires_grad) {
  return Tensor(Matrix::Zero(rows, cols), requires_grad);
}

Tensor Tensor::randn(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng,
                     bool requires_grad) {
  Matrix m(rows, cols);
  std::normal_distribution<double> dist(0.0, stddev);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return Tensor(std::move(m), requires_grad);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul: inner dimensions disagree (" + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.rows()) + ")");
  auto an = a.node(), bn = b.node();
  return wrap(make_node(an->value * bn->value, {an, bn}, [an, bn](TensorNode& out) {
    accumulate(an, out.grad * bn->value.transpose());
    accumulate(bn, an->value.transpose() * out.grad);
  }));
}

Tensor transpose(const Tensor& a) {
  auto an = a.node();
  return wrap(make_node(an->value.transpose(), {an},
                        [an](TensorNode& out) { accumulate(an, out.grad.transpose()); }));
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("add: shape mismatch");
  auto an = a.node(), bn = b.node();
  return wrap(make_node(an->value + bn->value, {an, bn}, [an, bn](TensorNode& out) {
    accumulate(an, out.grad);
    accumulate(bn, out.grad);
  }));
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("sub: shape mismatch");
  auto an = a.node(), bn = b.node();
  return wrap(make_node(an->value - bn->value, {an, bn}, [an, bn](TensorNode& out) {
    accumulate(an, out.grad);
    accumulate(bn, -out.grad);
  }));
}

Tensor scale(const Tensor& a, double s) {
  auto an = a.node();
  return wrap(make_node(an->value * s, {an},
                        [an, s](TensorNode& out) { accumulate(an, out.grad * s); }));
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("hadamard: shape mismatch");
  auto an = a.node(), bn = b.node();
  return wrap(make_node(an->value.cwiseProduct(bn->value), {an, bn}, [an, bn](TensorNode& out) {
    accumulate(an, out.grad.cwiseProduct(bn->value));
    accumulate(bn, out.grad.cwiseProduct(an->value));
  }));
}

Tensor add_row_broadcast(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols())
    throw std::invalid_argument("add_row_broadcast: row must be 1 x cols(a)");
  auto an = a.node(), rn = row.node();
  Matrix v = an->value;
  v.rowwise() += rn->value.row(0);
  return wrap(make_node(std::move(v), {an, rn}, [an, rn](TensorNode& out) {
    accumulate(an, out.grad);
    accumulate(rn, out.grad.colwise().sum());
  }));
}

Tensor gelu(const Tensor& a) {
  auto an = a.node();
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  Matrix v = an->value.unaryExpr([](double x) {
    const double u = kC * (x + kA * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
  });
  return wrap(make_node(std::move(v), {an}, [an](TensorNode& out) {
    Matrix d = an->value.unaryExpr([](double x) {
      const double u = kC * (x + kA * x * x * x);
      const double t = std::tanh(u);
      const double du = kC * (1.0 + 3.0 * kA * x * x);
      return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
    });
    accumulate(an, out.grad.cwiseProduct(d));
  }));
}

Tensor layernorm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps) {
  if (gain.rows() != 1 || gain.cols() != a.cols() || bias.rows() != 1 || bias.cols() != a.cols())
    throw std::invalid_argument("layernorm: gain/bias must be 1 x cols(a)");
  auto an = a.node(), gn = gain.node(), bn = bias.node();
  const Eigen::Index r = a.rows(), c = a.cols();

  auto xhat = std::make_shared<Matrix>(r, c);
  auto inv_std = std::make_shared<Vector>(r);
  Matrix v(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    const double mu = an->value.row(i).mean();
    const double var = (an->value.row(i).array() - mu).square().mean();
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)(i) = is;
    xhat->row(i) = (an->value.row(i).array() - mu) * is;
    v.row(i) = xhat->row(i).cwiseProduct(gn->value.row(0)) + bn->value.row(0);
  }
  return wrap(make_node(std::move(v), {an, gn, bn}, [an, gn, bn, xhat, inv_std](TensorNode& out) {
    const Eigen::Index r = out.value.rows(), c = out.value.cols();
    if (gn->requires_grad) {
      Matrix dg = Matrix::Zero(1, c);
      for (Eigen::Index i = 0; i < r; ++i) dg.row(0) += out.grad.row(i).cwiseProduct(xhat->row(i));
      accumulate(gn, dg);
    }
    accumulate(bn, out.grad.colwise().sum());
    if (an->requires_grad) {
      Matrix dx(r, c);
      for (Eigen::Index i = 0; i < r; ++i) {
        Eigen::RowVectorXd dxh = out.grad.row(i).cwiseProduct(gn->value.row(0));
        const double m1 = dxh.mean();
        const double m2 = dxh.cwiseProduct(xhat->row(i)).mean();
        dx.row(i) = (*inv_std)(i) * (dxh.array() - m1 - xhat->row(i).array() * m2);
      }
      accumulate(an, dx);
    }
  }));
}

Tensor causal_softmax(const Tensor& scores) {
  if (scores.rows() != scores.cols()) throw std::invalid_argument("causal_softmax: square input required");
  auto sn = scores.node();
  const Eigen::Index t = scores.rows();
  Matrix p = Matrix::Zero(t, t);
  for (Eigen::Index i = 0; i < t; ++i) {
    const double mx = sn->value.row(i).head(i + 1).maxCoeff();
    double z = 0.0;
    for (Eigen::Index j = 0; j <= i; ++j) {
      p(i, j) = std::exp(sn->value(i, j) - mx);
      z += p(i, j);
    }
    p.row(i).head(i + 1) /= z;
  }
  auto probs = std::make_shared<Matrix>(p);
  return wrap(make_node(std::move(p), {sn}, [sn, probs](TensorNode& out) {
    const Eigen::Index t = out.value.rows();
    Matrix ds = Matrix::Zero(t, t);
    for (Eigen::Index i = 0; i < t; ++i) {
      const double dot = out.grad.row(i).cwiseProduct(probs->row(i)).sum();
      ds.row(i) = probs->row(i).array() * (out.grad.row(i).array() - dot);
    }
    accumulate(sn, ds);
  }));
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& ids) {
  auto tn = table.node();
  Matrix v(static_cast<Eigen::Index>(ids.size()), table.cols());
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.rows())
      throw std::out_of_range("gather_rows: id " + std::to_string(ids[i]) + " outside table of " +
                              std::to_string(table.rows()) + " rows");
    v.row(static_cast<Eigen::Index>(i)) = tn->value.row(ids[i]);
  }
  return wrap(make_node(std::move(v), {tn}, [tn, ids](TensorNode& out) {
    if (!tn->requires_grad) return;
    tn->ensure_grad();
    for (size_t i = 0; i < ids.size(); ++i)
      tn->grad.row(ids[i]) += out.grad.row(static_cast<Eigen::Index>(i));
  }));
}

Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index n) {
  if (start < 0 || n < 0 || start + n > a.cols()) throw std::invalid_argument("slice_cols: out of range");
  auto an = a.node();
  return wrap(make_node(an->value.middleCols(start, n), {an}, [an, start, n](TensorNode& out) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    an->grad.middleCols(start, n) += out.grad;
  }));
}

Tensor slice_rows(const Tensor& a, Eigen::Index start, Eigen::Index n) {
  if (start < 0 || n < 0 || start + n > a.rows()) throw std::invalid_argument("slice_rows: out of range");
  auto an = a.node();
  return wrap(make_node(an->value.middleRows(start, n), {an}, [an, start, n](TensorNode& out) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    an->grad.middleRows(start, n) += out.grad;
  }));
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty input");
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != parts[0].rows()) throw std::invalid_argument("concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix v(parts[0].rows(), cols);
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::vector<Eigen::Index> offsets;
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    v.middleCols(off, p.cols()) = p.value();
    parents.push_back(p.node());
    offsets.push_back(off);
    off += p.cols();
  }
  return wrap(make_node(std::move(v), parents, [parents, offsets](TensorNode& out) {
    for (size_t i = 0; i < parents.size(); ++i)
      accumulate(parents[i], out.grad.middleCols(offsets[i], parents[i]->value.cols()));
  }));
}

Tensor sum(const Tensor& a) {
  auto an = a.node();
  Matrix v(1, 1);
  v(0, 0) = an->value.sum();
  return wrap(make_node(std::move(v), {an}, [an](TensorNode& out) {
    accumulate(an, Matrix::Constant(an->value.rows(), an->value.cols(), out.grad(0, 0)));
  }));
}

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& targets) {
  if (static_cast<Eigen::Index>(targets.size()) != logits.rows())
    throw std::invalid_argument("softmax_cross_entropy: targets length must equal logit rows");
  auto ln = logits.node();
  const Eigen::Index t = logits.rows(), v = logits.cols();
  for (int id : targets)
    if (id < 0 || id >= v)
      throw std::out_of_range("softmax_cross_entropy: target id " + std::to_string(id) +
                              " outside vocab of " + std::to_string(v));
  auto probs = std::make_shared<Matrix>(t, v);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < t; ++i) {
    const double mx = ln->value.row(i).maxCoeff();
    Eigen::RowVectorXd e = (ln->value.row(i).array() - mx).exp();
    const double z = e.sum();
    probs->row(i) = e / z;
    loss += mx + std::log(z) - ln->value(i, targets[static_cast<size_t>(i)]);
  }
  Matrix out(1, 1);
  out(0, 0) = loss / static_cast<double>(t);
  return wrap(make_node(std::move(out), {ln}, [ln, probs, targets](TensorNode& node) {
    const Eigen::Index t = probs->rows();
    Matrix d = *probs;
    for (Eigen::Index i = 0; i < t; ++i) d(i, targets[static_cast<size_t>(i)]) -= 1.0;
    accumulate(ln, d * (node.grad(0, 0) / static_cast<double>(t)));
  }));
}

void backward(const Tensor& loss) {
  if (!loss.defined() || !loss.is_scalar())
    throw std::invalid_argument("backward: loss must be a defined scalar");
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS; child order is parent-declaration order, so the
  // visit sequence (and thus accumulation order) is deterministic.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  struct Frame {
    TensorNode* node;
    size_t next_parent;
  };
  std::vector<Frame> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      TensorNode* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  loss.node()->grad = Matrix::Constant(1, 1, 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backprop) {
      n->ensure_grad();
      n->backprop(*n);
    }
  }
}

Vector softmax_row(const Eigen::Ref<const Eigen::RowVectorXd>& logits, double temperature) {
  Eigen::RowVectorXd scaled = temperature > 0 ? (logits / temperature).eval() : logits.eval();
  const double mx = scaled.maxCoeff();
  Vector p = (scaled.array() - mx).exp().transpose();
  p /= p.sum();
  return p;
}

}  // namespace memlora
