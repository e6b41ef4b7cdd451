#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string_view>
#include <vector>

#include "disenkgat/tensor.hpp"

namespace disenkgat {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
/// owning Tape is alive.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode computation record. Nodes are appended in evaluation order,
/// which is a topological order, so backward() simply walks the list in
/// reverse. A node whose inputs are all constants stores no backward rule.
class Tape {
 public:
  /// Accumulates the node's gradient into its inputs' gradient buffers.
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn fn);

  /// Seeds d(loss)/d(loss) = 1 and propagates. Throws ShapeError for a
  /// non-scalar loss.
  void backward(const Var& loss);

  /// Gradient of the last backward() w.r.t. `v`; zeros if `v` was not reached.
  Tensor grad(const Var& v) const;

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Gradient accumulator for node `id`, zero-initialised on first use.
  Tensor& grad_buffer(std::size_t id);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

enum class Activation { Identity, Tanh, Relu, Sigmoid };

Activation parse_activation(std::string_view name);
std::string_view to_string(Activation a);

using Index = std::vector<std::size_t>;

// Elementwise ops; operands must have identical shapes.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }

Var scale(const Var& x, double s);
Var add_scalar(const Var& x, double s);
Var square(const Var& x);
Var exp(const Var& x);
Var log(const Var& x);
Var clamp(const Var& x, double lo, double hi);
Var activate(const Var& x, Activation act);

/// Rank-2 matrix product.
Var matmul(const Var& a, const Var& b);

/// diag(w) applied to x: a vector of length d, or every row of an m x d matrix.
Var diag_scale(const Var& w, const Var& x);

/// Softmax of a rank-1 tensor (axis 0) or of a rank-2 tensor along `axis`.
Var softmax(const Var& x, std::size_t axis);

Var sum(const Var& x);
Var mean(const Var& x);

Var reshape(const Var& x, Shape shape);
/// Concatenation of rank-2 tensors along `axis` (0 = rows, 1 = columns).
Var concat(std::span<const Var> parts, std::size_t axis);
Var slice_cols(const Var& x, std::size_t begin, std::size_t count);

/// out[i] = x[idx[i]] for a rank-2 `x`.
Var gather_rows(const Var& x, const Index& idx);
/// out[idx[i]] += x[i]; output has `num_rows` rows.
Var scatter_add_rows(const Var& x, const Index& idx, std::size_t num_rows);
/// Softmax over the rows sharing a segment id, independently per column.
Var segment_softmax(const Var& logits, const Index& segment, std::size_t num_segments);

/// [m x d] -> [m x (times*d)], the row repeated `times` times.
Var tile_cols(const Var& x, std::size_t times);
/// [m x K] -> [m x (K*width)], every element repeated `width` times.
Var repeat_elements(const Var& x, std::size_t width);
/// [m x (K*width)] -> [m x K], sums of consecutive width-sized blocks.
Var block_sum(const Var& x, std::size_t width);

/// out_k = sum_i a_i * b_{(k+i) mod d}.
Tensor circular_correlation(std::span<const double> a, std::span<const double> b);
Var circular_correlation(const Var& a, const Var& b);
/// Row-wise circular correlation of each width-sized block.
Var block_circular_correlation(const Var& a, const Var& b, std::size_t width);

/// Component-wise candidate scoring. `queries` is B x (K*d), `candidates` is
/// N x (K*d); the result is B x (K*N) with out[b, k*N + n] the score of block k.
Var block_dot_scores(const Var& queries, const Var& candidates, std::size_t blocks);
/// Same layout as block_dot_scores with score -||q_k - c_k||_1.
Var block_neg_l1_scores(const Var& queries, const Var& candidates, std::size_t blocks);
/// out[b, n] = sum_k w[b, k] * scores[b, k*N + n].
Var block_weighted_sum(const Var& weights, const Var& scores);

/// Single-channel valid 2-D cross-correlation: input M x H x W, kernel
/// F x kh x kw, output M x F x (H-kh+1) x (W-kw+1).
Var conv2d(const Var& input, const Var& kernel);

/// sum_i [ -t_i log s(x_i) - (1-t_i) log(1-s(x_i)) ] with s the logistic
/// function, evaluated stably from logits.
Var bce_with_logits(const Var& logits, const Tensor& targets);

/// D_ij = ||x_i - x_j||^2 for the rows of a B x d matrix.
Var pairwise_sq_dist(const Var& x);
/// H K H with H = I - (1/B) 11^T.
Var double_center(const Var& k);

}  // namespace disenkgat
