#pragma once

#include "daanet/types.hpp"

#include <array>
#include <functional>
#include <memory>
#include <random>
#include <unordered_map>
#include <vector>

namespace daanet {

/// A named, trainable tensor. Rows listed in frozen_rows keep their values
/// through optimizer updates (used for fixed word vectors and pad rows).
struct Parameter {
  Matrix value;
  bool trainable = true;
  std::vector<std::uint8_t> frozen_rows;  // empty means no row is frozen

  bool row_frozen(Index r) const {
    return !frozen_rows.empty() && frozen_rows[static_cast<std::size_t>(r)] != 0;
  }
  Index size() const { return value.size(); }
  Index trainable_size() const {
    if (!trainable) return 0;
    if (frozen_rows.empty()) return value.size();
    Index n = 0;
    for (Index r = 0; r < value.rows(); ++r)
      if (!row_frozen(r)) n += value.cols();
    return n;
  }
};

using ParamPtr = std::shared_ptr<Parameter>;

namespace ad {

class Tape;

/// Handle to a node on a tape. Cheap to copy; invalid until assigned.
struct Var {
  Tape* tape = nullptr;
  int id = -1;
  bool valid() const { return tape != nullptr && id >= 0; }
};

/// Gradient tape: records the forward computation and replays it in reverse.
/// One backward pass per recording; reuse only after reset().
class Tape {
 public:
  struct Node {
    Matrix value;
    Matrix grad;  // allocated lazily during backward
    bool requires_grad = false;
    std::function<void(Tape&, const Node&)> backprop;
  };

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {
    nodes_.reserve(1024);
  }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix m);
  /// One node per distinct Parameter; repeated calls return the same node,
  /// so gradients through shared parameters accumulate naturally.
  Var leaf(const ParamPtr& p);

  const Matrix& value(Var v) const { return node(v.id).value; }
  bool grad_enabled() const { return grad_enabled_; }
  bool backward_done() const { return backward_done_; }

  /// Runs reverse accumulation from a 1x1 loss node.
  void backward(Var loss);

  /// Gradient of the last backward pass w.r.t. a parameter; zeros if the
  /// parameter never entered the recording or was unreachable from the loss.
  Matrix grad_of(const ParamPtr& p) const;

  const Matrix& grad(Var v) const;

  void reset();

  /// Node ids of every softmax emitted on this tape, in creation order.
  const std::vector<int>& softmax_nodes() const { return softmax_nodes_; }

  std::size_t node_count() const { return nodes_.size(); }

  // -- recording interface, used by the op free functions --
  int emit(Matrix value, bool requires_grad,
           std::function<void(Tape&, const Node&)> backprop);
  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  bool wants_grad(Var v) const { return node(v.id).requires_grad; }
  /// Zero-initialized gradient buffer of a node, or nullptr when the node
  /// does not require gradients (constants).
  Matrix* grad_target(int id);
  void note_softmax(int id) { softmax_nodes_.push_back(id); }

 private:
  std::vector<Node> nodes_;
  // Values are (node id, owning handle): holding the handle keeps a recycled
  // heap address from aliasing a dead parameter's node.
  std::unordered_map<const Parameter*, std::pair<int, ParamPtr>> param_nodes_;
  std::vector<int> softmax_nodes_;
  bool grad_enabled_;
  bool backward_done_ = false;
};

// Elementwise and broadcast arithmetic.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var add_rowvec(Var x, Var r);   // r: 1 x cols
Var sub_colvec(Var x, Var c);   // c: rows x 1
Var mul_colvec(Var x, Var c);   // scales row i by c(i)
Var mul_rowvec(Var x, Var r);   // scales column j by r(j)
Var add_scalar(Var x, Var s);   // s: 1 x 1 broadcast over all entries
Var scale(Var x, Scalar c);
Var add_const(Var x, Scalar c);
Var mul_const(Var x, Matrix m);  // elementwise by a fixed matrix

// Matrix products.
Var matmul(Var a, Var b);
Var matmul_nt(Var a, Var b);  // a * b^T

// Nonlinearities.
Var sigmoid(Var x);
Var tanh_of(Var x);
Var relu(Var x);
Var rsqrt_shift(Var x, Scalar eps);  // (x + eps)^(-1/2), x >= 0

// Reductions and reshaping.
Var row_mean(Var x);  // rows x 1
Var sum_all(Var x);   // 1 x 1
Var concat_cols(const std::vector<Var>& xs);
Var concat_rows(const std::vector<Var>& xs);
Var slice_cols(Var x, Index first, Index n);
Var slice_rows(Var x, Index first, Index n);
Var pad_cols(Var x, Index new_cols);       // zero-extend on the right
Var shift_rows(Var x, int offset);         // out.row(i) = x.row(i+offset), zero fill
Var gather_rows(Var table, std::vector<int> ids);
Var col_max(Var x);  // 1 x cols; ties resolve to the earliest row

/// Row softmax with an optional additive mask (entries 0 or kMaskedLogit).
/// Masked entries come out exactly zero; a fully masked row is an error.
Var softmax_rows(Var x, const Matrix* additive_mask = nullptr);

/// Plain-value softmax used by the tape op; shares the exact arithmetic.
Matrix softmax_rows_value(const Matrix& x, const Matrix* additive_mask = nullptr);

/// Sum over rows t of -log(max(probs(t, targets[t]), clamp)). Rows whose
/// picked probability fell below clamp are counted into *clamp_count and
/// contribute zero gradient.
Var nll_pick(Var probs, std::vector<int> targets, Scalar clamp = 1e-12,
             int* clamp_count = nullptr);

/// Per-step coverage penalties for a T x n matrix of attention rows:
/// out(t) = sum_j min(scores(t,j), sum_{t'<t} scores(t',j)); out(0) = 0.
/// Ties in the min take the current-step side.
Var coverage_steps(Var scores);

/// Inverted dropout with a Bernoulli(keep) mask drawn from rng.
Var dropout(Var x, Scalar keep, std::mt19937_64& rng);

}  // namespace ad
}  // namespace daanet
