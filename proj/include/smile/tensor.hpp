#pragma once

#include <Eigen/Dense>

#include <array>
#include <atomic>
#include <functional>
#include <vector>

#include "smile/common.hpp"

namespace smile::ad {

/// All dense values are row-major 64-bit matrices. Vectors are column
/// matrices (n x 1) and scalars are 1 x 1; rank never exceeds 2, which is all
/// the objective needs.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Tape;

/// Value-semantic handle to a dense value, optionally attached to a Tape node
/// so gradients can flow back to it. Detached tensors (constants) take part
/// in forward computation only.
class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Mat v) {
    Tensor t;
    t.v_ = std::move(v);
    return t;
  }
  static Tensor scalar(double v) { return constant(Mat::Constant(1, 1, v)); }

  const Mat& value() const { return v_; }
  double scalar_value() const {
    if (v_.size() != 1)
      throw ShapeError("scalar_value() on tensor of shape " + shape_str());
    return v_(0, 0);
  }

  Eigen::Index rows() const { return v_.rows(); }
  Eigen::Index cols() const { return v_.cols(); }
  Eigen::Index size() const { return v_.size(); }
  std::array<Eigen::Index, 2> shape() const { return {v_.rows(), v_.cols()}; }
  std::string shape_str() const {
    return std::to_string(v_.rows()) + "x" + std::to_string(v_.cols());
  }

  bool on_tape() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int node_id() const { return node_; }
  /// True when at least one leaf upstream of this value requires gradients.
  bool requires_grad() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Mat v_;
  Tape* tape_ = nullptr;
  int node_ = -1;
};

/// Gradient tape: an ordered record of primitive operations. Node parents
/// always precede the node itself, so one reverse sweep accumulates all
/// gradients; accumulation order is fixed by construction, making gradients
/// bit-reproducible for identical op sequences.
///
/// A Tape is confined to a single execution context. Tensors may be copied
/// across threads freely; tapes may not be shared.
class Tape {
 public:
  struct Edge {
    int parent;
    std::function<Mat(const Mat& upstream)> vjp;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers a differentiable leaf (a parameter or checked input).
  Tensor leaf(Mat value) {
    Tensor t;
    t.v_ = std::move(value);
    t.tape_ = this;
    t.node_ = record_node(t.v_, {});
    leaves_.push_back(t.node_);
    return t;
  }

  /// Records an interior node produced by a primitive with the given
  /// value and per-parent pullbacks.
  Tensor intern(Mat value, std::vector<Edge> edges) {
    Tensor t;
    t.v_ = std::move(value);
    t.tape_ = this;
    t.node_ = record_node(t.v_, std::move(edges));
    return t;
  }

  /// Reverse accumulation from a scalar loss. Populates the gradient of
  /// every leaf (zero where the loss does not depend on it). A second
  /// backward without new forward work is rejected.
  void backward(const Tensor& loss);

  const Mat& grad(const Tensor& t) const {
    if (t.tape_ != this) throw ConfigError("tensor does not live on this tape");
    return nodes_[static_cast<std::size_t>(t.node_)].grad;
  }

  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool grad_set = false;
    std::vector<Edge> edges;
  };

  int record_node(const Mat& value, std::vector<Edge> edges) {
    Node n;
    n.value = value;
    n.edges = std::move(edges);
    nodes_.push_back(std::move(n));
    backward_spent_ = false;
    return static_cast<int>(nodes_.size()) - 1;
  }

  std::vector<Node> nodes_;
  std::vector<int> leaves_;
  bool backward_spent_ = false;
};

// ---------------------------------------------------------------------------
// Primitive operations
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor div(const Tensor& a, const Tensor& b);  // elementwise
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor tanh(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor square(const Tensor& a);
Tensor clamp_min(const Tensor& a, double lo);

Tensor sum(const Tensor& a);       // -> 1x1
Tensor row_sum(const Tensor& a);   // B x d -> B x 1
Tensor col_sum(const Tensor& a);   // B x d -> 1 x d
Tensor col_mean(const Tensor& a);  // B x d -> 1 x d

Tensor diagonal(const Tensor& a);               // d x d -> d x 1
Tensor col(const Tensor& a, Eigen::Index j);    // B x n -> B x 1
Tensor hcat(const std::vector<Tensor>& parts);  // [B x k_i] -> B x sum(k_i)
Tensor reshape(const Tensor& a, Eigen::Index r, Eigen::Index c);

// Row-broadcast: r is 1 x d applied to every row of a (B x d).
Tensor badd_row(const Tensor& a, const Tensor& r);
Tensor bsub_row(const Tensor& a, const Tensor& r);
Tensor bdiv_row(const Tensor& a, const Tensor& r);
// Column-broadcast: c is B x 1 applied to every column of a (B x d).
Tensor bmul_col(const Tensor& a, const Tensor& c);
Tensor bdiv_col(const Tensor& a, const Tensor& c);

/// Numerically stable row-wise softmax (max-subtraction).
Tensor softmax_rows(const Tensor& a);
/// Numerically stable row-wise log(sum(exp(x))): B x n -> B x 1.
Tensor logsumexp_rows(const Tensor& a);

/// Softmax over all entries of a vector-shaped tensor (n x 1 or 1 x n).
/// Shift-invariant; rejects NaN input.
Tensor softmax(const Tensor& x);

/// Rows of `table` selected by index; gradients scatter-add back.
Tensor gather_rows(const Tensor& table, const std::vector<int>& ids);
/// One output row per bag: the mean of the table rows named by that bag.
Tensor bag_mean_rows(const Tensor& table, const std::vector<std::vector<int>>& bags);

// ---------------------------------------------------------------------------
// Composite operations used across the objective
// ---------------------------------------------------------------------------

/// Standardizes every column to mean 0 / sd 1 over the batch axis
/// (population convention). The denominator is max(sd, eps) so healthy
/// columns come out with exactly unit sd and constant columns map to zero.
Tensor column_standardize(const Tensor& z, double eps = 1e-5);

/// Rows rescaled to unit L2 norm; zero rows stay zero (norm clamped to eps).
Tensor l2_normalize_rows(const Tensor& z, double eps = 1e-8);

/// Cosine similarity of two equal-shape vectors as a 1x1 tensor. Exact zero
/// vectors yield similarity 0 and bump the degenerate-input counter.
Tensor cosine_sim(const Tensor& a, const Tensor& b, double eps = 1e-8);

/// Count of degenerate (zero-vector) cosine_sim calls seen so far.
std::uint64_t degenerate_cosine_count();
void reset_degenerate_cosine_count();

// ---------------------------------------------------------------------------
// Finite-difference gradient oracle
// ---------------------------------------------------------------------------

/// A scalar function of a list of parameter matrices, expressed through the
/// tape so it can be both differentiated and re-evaluated pointwise.
using ScalarFn = std::function<Tensor(Tape&, const std::vector<Tensor>&)>;

/// Compares tape gradients of `f` at `theta` against central finite
/// differences with step `h`. Returns the maximum over all coordinates of
///   |analytic - central| / max(1e-8, |central|).
double finite_difference_check(const ScalarFn& f, const std::vector<Mat>& theta,
                               double h = 1e-5);

}  // namespace smile::ad
