#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <vector>

namespace memlora {

// All numerics run in float64; activations are row-major (rows = sequence
// positions, cols = features).
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct TensorNode {
  Matrix value;
  Matrix grad;  // lazily allocated, same shape as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Pulls this node's grad into its parents' grads.
  std::function<void(TensorNode&)> backprop;

  void ensure_grad() {
    if (grad.rows() != value.rows() || grad.cols() != value.cols())
      grad = Matrix::Zero(value.rows(), value.cols());
  }
};

// Value-semantics handle over a shared graph node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Matrix m, bool requires_grad = false);
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

  static Tensor zeros(Eigen::Index rows, Eigen::Index cols, bool requires_grad = false);
  static Tensor randn(Eigen::Index rows, Eigen::Index cols, double stddev,
                      std::mt19937_64& rng, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  Eigen::Index size() const { return node_->value.size(); }
  bool is_scalar() const { return defined() && size() == 1; }

  const Matrix& value() const { return node_->value; }
  Matrix& value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }
  void zero_grad() { node_->grad = Matrix::Zero(node_->value.rows(), node_->value.cols()); }
  bool has_grad() const { return node_->grad.size() == node_->value.size() && node_->grad.size() > 0; }

  std::shared_ptr<TensorNode> node() const { return node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

// --- differentiable ops -----------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor hadamard(const Tensor& a, const Tensor& b);
// Adds a 1xC row vector to every row of an RxC matrix.
Tensor add_row_broadcast(const Tensor& a, const Tensor& row);
Tensor gelu(const Tensor& a);
// Row-wise layer norm with learned gain/bias (both 1xC).
Tensor layernorm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
// Row-wise softmax over a TxT score matrix with entries j > i masked out.
Tensor causal_softmax(const Tensor& scores);
// Selects rows of `table` by id (embedding lookup).
Tensor gather_rows(const Tensor& table, const std::vector<int>& ids);
Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index n);
Tensor slice_rows(const Tensor& a, Eigen::Index start, Eigen::Index n);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor sum(const Tensor& a);  // 1x1
// Mean over positions of -log softmax(logits)[target]; logits is (seq, vocab).
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& targets);

// Reverse-mode sweep from a scalar loss. Gradients accumulate into every
// reachable node with requires_grad; visits each node exactly once in
// reverse topological order.
void backward(const Tensor& loss);

// Non-differentiable helper used by greedy decoding.
Vector softmax_row(const Eigen::Ref<const Eigen::RowVectorXd>& logits, double temperature);

}  // namespace memlora
