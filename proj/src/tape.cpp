#include "daanet/tape.hpp"

#include <cmath>
#include <utility>

namespace daanet::ad {

namespace {

Tape& same_tape(Var a, Var b) {
  if (!a.valid() || !b.valid() || a.tape != b.tape)
    throw NumericError("op: arguments live on different tapes");
  return *a.tape;
}

Tape& tape_of(Var a) {
  if (!a.valid()) throw NumericError("op: invalid var");
  return *a.tape;
}

}  // namespace

int Tape::emit(Matrix value, bool requires_grad,
               std::function<void(Tape&, const Node&)> backprop) {
  if (backward_done_)
    throw NumericError("tape: recording after backward; reset() first");
  Node n;
  n.value = std::move(value);
  n.requires_grad = grad_enabled_ && requires_grad;
  if (n.requires_grad) n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Var Tape::constant(Matrix m) {
  return Var{this, emit(std::move(m), false, nullptr)};
}

Var Tape::leaf(const ParamPtr& p) {
  if (!p) throw NumericError("tape: null parameter");
  auto it = param_nodes_.find(p.get());
  if (it != param_nodes_.end()) return Var{this, it->second.first};
  int id = emit(p->value, p->trainable, nullptr);
  param_nodes_.emplace(p.get(), std::make_pair(id, p));
  return Var{this, id};
}

Matrix* Tape::grad_target(int id) {
  Node& n = node(id);
  if (!n.requires_grad) return nullptr;
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  return &n.grad;
}

void Tape::backward(Var loss) {
  if (!grad_enabled_) throw NumericError("tape: gradients disabled");
  if (backward_done_) throw NumericError("tape: one backward per recording");
  if (!loss.valid() || loss.tape != this)
    throw NumericError("tape: loss is not on this tape");
  const Node& l = node(loss.id);
  if (l.value.rows() != 1 || l.value.cols() != 1)
    throw NumericError("tape: backward expects a 1x1 loss");
  backward_done_ = true;
  if (!l.requires_grad) return;  // loss independent of every parameter
  node(loss.id).grad = Matrix::Ones(1, 1);
  for (int i = loss.id; i >= 0; --i) {
    Node& n = node(i);
    if (n.grad.size() != 0 && n.backprop) n.backprop(*this, n);
  }
}

Matrix Tape::grad_of(const ParamPtr& p) const {
  auto it = param_nodes_.find(p.get());
  if (it == param_nodes_.end())
    return Matrix::Zero(p->value.rows(), p->value.cols());
  const Node& n = node(it->second.first);
  if (n.grad.size() == 0)
    return Matrix::Zero(p->value.rows(), p->value.cols());
  return n.grad;
}

const Matrix& Tape::grad(Var v) const {
  static const Matrix empty;
  const Node& n = node(v.id);
  return n.grad.size() != 0 ? n.grad : empty;
}

void Tape::reset() {
  nodes_.clear();
  param_nodes_.clear();
  softmax_nodes_.clear();
  backward_done_ = false;
}

// ---------------------------------------------------------------------------
// elementwise / broadcast

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Matrix& A = t.value(a);
  const Matrix& B = t.value(b);
  if (A.rows() != B.rows() || A.cols() != B.cols())
    throw NumericError("add: shape mismatch");
  bool rg = t.wants_grad(a) || t.wants_grad(b);
  int ia = a.id, ib = b.id;
  return Var{&t, t.emit(A + B, rg, [ia, ib](Tape& tp, const Tape::Node& self) {
                if (Matrix* g = tp.grad_target(ia)) *g += self.grad;
                if (Matrix* g = tp.grad_target(ib)) *g += self.grad;
              })};
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Matrix& A = t.value(a);
  const Matrix& B = t.value(b);
  if (A.rows() != B.rows() || A.cols() != B.cols())
    throw NumericError("sub: shape mismatch");
  bool rg = t.wants_grad(a) || t.wants_grad(b);
  int ia = a.id, ib = b.id;
  return Var{&t, t.emit(A - B, rg, [ia, ib](Tape& tp, const Tape::Node& self) {
                if (Matrix* g = tp.grad_target(ia)) *g += self.grad;
                if (Matrix* g = tp.grad_target(ib)) *g -= self.grad;
              })};
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Matrix& A = t.value(a);
  const Matrix& B = t.value(b);
  if (A.rows() != B.rows() || A.cols() != B.cols())
    throw NumericError("mul: shape mismatch");
  bool rg = t.wants_grad(a) || t.wants_grad(b);
  int ia = a.id, ib = b.id;
  return Var{&t, t.emit(A.cwiseProduct(B), rg,
                        [ia, ib](Tape& tp, const Tape::Node& self) {
                          if (Matrix* g = tp.grad_target(ia))
                            *g += self.grad.cwiseProduct(tp.node(ib).value);
                          if (Matrix* g = tp.grad_target(ib))
                            *g += self.grad.cwiseProduct(tp.node(ia).value);
                        })};
}

Var add_rowvec(Var x, Var r) {
  Tape& t = same_tape(x, r);
  const Matrix& X = t.value(x);
  const Matrix& R = t.value(r);
  if (R.rows() != 1 || R.cols() != X.cols())
    throw NumericError("add_rowvec: expected 1 x cols");
  Matrix y = X;
  y.rowwise() += R.row(0);
  bool rg = t.wants_grad(x) || t.wants_grad(r);
  int ix = x.id, ir = r.id;
  return Var{&t, t.emit(std::move(y), rg,
                        [ix, ir](Tape& tp, const Tape::Node& self) {
                          if (Matrix* g = tp.grad_target(ix)) *g += self.grad;
                          if (Matrix* g = tp.grad_target(ir))
                            g->row(0) += self.grad.colwise().sum();
                        })};
}

Var sub_colvec(Var x, Var c) {
  Tape& t = same_tape(x, c);
  const Matrix& X = t.value(x);
  const Matrix& C = t.value(c);
  if (C.cols() != 1 || C.rows() != X.rows())
    throw NumericError("sub_colvec: expected rows x 1");
  Matrix y = X;
  y.colwise() -= C.col(0);
  bool rg = t.wants_grad(x) || t.wants_grad(c);
  int ix = x.id, ic = c.id;
  return Var{&t, t.emit(std::move(y), rg,
                        [ix, ic](Tape& tp, const Tape::Node& self) {
                          if (Matrix* g = tp.grad_target(ix)) *g += self.grad;
                          if (Matrix* g = tp.grad_target(ic))
                            g->col(0) -= self.grad.rowwise().sum();
                        })};
}

Var mul_colvec(Var x, Var c) {
  Tape& t = same_tape(x, c);
  const Matrix& X = t.value(x);
  const Matrix& C = t.value(c);
  if (C.cols() != 1 || C.rows() != X.rows())
    throw NumericError("mul_colvec: expected rows x 1");
  Matrix y = X.array().colwise() * C.col(0).array();
  bool rg = t.wants_grad(x) || t.wants_grad(c);
  int ix = x.id, ic = c.id;
  return Var{&t, t.emit(std::move(y), rg, [ix, ic](Tape& tp,
                                                   const Tape::Node& self) {
                const Matrix& X0 = tp.node(ix).value;
                const Matrix& C0 = tp.node(ic).value;
                if (Matrix* g = tp.grad_target(ix))
                  *g += (self.grad.array().colwise() * C0.col(0).array()).matrix();
                if (Matrix* g = tp.grad_target(ic))
                  g->col(0) += self.grad.cwiseProduct(X0).rowwise().sum();
              })};
}

Var mul_rowvec(Var x, Var r) {
  Tape& t = same_tape(x, r);
  const Matrix& X = t.value(x);
  const Matrix& R = t.value(r);
  if (R.rows() != 1 || R.cols() != X.cols())
    throw NumericError("mul_rowvec: expected 1 x cols");
  Matrix y = X.array().rowwise() * R.row(0).array();
  bool rg = t.wants_grad(x) || t.wants_grad(r);
  int ix = x.id, ir = r.id;
  return Var{&t, t.emit(std::move(y), rg, [ix, ir](Tape& tp,
                                                   const Tape::Node& self) {
                const Matrix& X0 = tp.node(ix).value;
                const Matrix& R0 = tp.node(ir).value;
                if (Matrix* g = tp.grad_target(ix))
                  *g += (self.grad.array().rowwise() * R0.row(0).array()).matrix();
                if (Matrix* g = tp.grad_target(ir))
                  g->row(0) += self.grad.cwiseProduct(X0).colwise().sum();
              })};
}

Var add_scalar(Var x, Var s) {
  Tape& t = same_tape(x, s);
  const Matrix& S = t.value(s);
  if (S.rows() != 1 || S.cols() != 1)
    throw NumericError("add_scalar: expected 1 x 1");
  Matrix y = t.value(x).array() + S(0, 0);
  bool rg = t.wants_grad(x) || t.wants_grad(s);
  int ix = x.id, is = s.id;
  return Var{&t, t.emit(std::move(y), rg,
                        [ix, is](Tape& tp, const Tape::Node& self) {
                          if (Matrix* g = tp.grad_target(ix)) *g += self.grad;
                          if (Matrix* g = tp.grad_target(is))
                            (*g)(0, 0) += self.grad.sum();
                        })};
}

Var scale(Var x, Scalar c) {
  Tape& t = tape_of(x);
  bool rg = t.wants_grad(x);
  int ix = x.id;
  return Var{&t, t.emit(t.value(x) * c, rg,
                        [ix, c](Tape& tp, const Tape::Node& self) {
                          if (Matrix* g = tp.grad_target(ix))
                            *g += self.grad * c;
                        })};
}

Var add_const(Var x, Scalar c) {
  Tape& t = tape_of(x);
  Matrix y = t.value(x).array() + c;
  bool rg = t.wants_grad(x);
  int ix = x.id;
  return Var{&t, t.emit(std::move(y), rg,
                        [ix](Tape& tp, const Tape::Node& self) {
                          if (Matrix* g = tp.grad_target(ix)) *g += self.grad;
                        })};
}

Var mul_const(Var x, Matrix m) {
  Tape& t = tape_of(x);
  const Matrix& X = t.value(x);
  if (m.rows() != X.rows() || m.cols() != X.cols())
    throw NumericError("mul_const: shape mismatch");
  Matrix y = X.cwiseProduct(m);
  bool rg = t.wants_grad(x);
  int ix = x.id;
  return Var{&t, t.emit(std::move(y), rg,
                        [ix, m = std::move(m)](Tape& tp, const Tape::Node& self) {
                          if (Matrix* g = tp.grad_target(ix))
                            *g += self.grad.cwiseProduct(m);
                        })};
}

// ---------------------------------------------------------------------------
// products

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Matrix& A = t.value(a);
  const Matrix& B = t.value(b);
  if (A.cols() != B.rows()) throw NumericError("matmul: inner dims differ");
  Matrix y = A * B;
  bool rg = t.wants_grad(a) || t.wants_grad(b);
  int ia = a.id, ib = b.id;
  return Var{&t, t.emit(std::move(y), rg,
                        [ia, ib](Tape& tp, const Tape::Node& self) {
                          if (Matrix* g = tp.grad_target(ia))
                            g->noalias() += self.grad * tp.node(ib).value.transpose();
                          if (Matrix* g = tp.grad_target(ib))
                            g->noalias() += tp.node(ia).value.transpose() * self.grad;
                        })};
}

Var matmul_nt(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Matrix& A = t.value(a);
  const Matrix& B = t.value(b);
  if (A.cols() != B.cols()) throw NumericError("matmul_nt: widths differ");
  Matrix y = A * B.transpose();
  bool rg = t.wants_grad(a) || t.wants_grad(b);
  int ia = a.id, ib = b.id;
  return Var{&t, t.emit(std::move(y), rg,
                        [ia, ib](Tape& tp, const Tape::Node& self) {
                          if (Matrix* g = tp.grad_target(ia))
                            g->noalias() += self.grad * tp.node(ib).value;
                          if (Matrix* g = tp.grad_target(ib))
                            g->noalias() += self.grad.transpose() * tp.node(ia).value;
                        })};
}

// ---------------------------------------------------------------------------
// nonlinearities

Var sigmoid(Var x) {
  Tape& t = tape_of(x);
  Matrix y = (1.0 / (1.0 + (-t.value(x).array()).exp())).matrix();
  bool rg = t.wants_grad(x);
  int ix = x.id;
  return Var{&t, t.emit(std::move(y), rg,
                        [ix](Tape& tp, const Tape::Node& self) {
                          if (Matrix* g = tp.grad_target(ix)) {
                            auto s = self.value.array();
                            *g += (self.grad.array() * s * (1.0 - s)).matrix();
                          }
                        })};
}

Var tanh_of(Var x) {
  Tape& t = tape_of(x);
  Matrix y = t.value(x).array().tanh().matrix();
  bool rg = t.wants_grad(x);
  int ix = x.id;
  return Var{&t, t.emit(std::move(y), rg,
                        [ix](Tape& tp, const Tape::Node& self) {
                          if (Matrix* g = tp.grad_target(ix)) {
                            auto s = self.value.array();
                            *g += (self.grad.array() * (1.0 - s * s)).matrix();
                          }
                        })};
}

Var relu(Var x) {
  Tape& t = tape_of(x);
  Matrix y = t.value(x).cwiseMax(0.0);
  bool rg = t.wants_grad(x);
  int ix = x.id;
  return Var{&t, t.emit(std::move(y), rg,
                        [ix](Tape& tp, const Tape::Node& self) {
                          if (Matrix* g = tp.grad_target(ix)) {
                            auto on = (tp.node(ix).value.array() > 0.0).cast<Scalar>();
                            *g += (self.grad.array() * on).matrix();
                          }
                        })};
}

Var rsqrt_shift(Var x, Scalar eps) {
  Tape& t = tape_of(x);
  Matrix y = (t.value(x).array() + eps).rsqrt().matrix();
  bool rg = t.wants_grad(x);
  int ix = x.id;
  return Var{&t, t.emit(std::move(y), rg,
                        [ix](Tape& tp, const Tape::Node& self) {
                          if (Matrix* g = tp.grad_target(ix)) {
                            auto y3 = self.value.array().cube();
                            *g += (self.grad.array() * (-0.5) * y3).matrix();
                          }
                        })};
}

// ---------------------------------------------------------------------------
// reductions, reshaping

Var row_mean(Var x) {
  Tape& t = tape_of(x);
  const Matrix& X = t.value(x);
  Matrix y = X.rowwise().mean();
  bool rg = t.wants_grad(x);
  int ix = x.id;
  Scalar inv = 1.0 / static_cast<Scalar>(X.cols());
  return Var{&t, t.emit(std::move(y), rg,
                        [ix, inv](Tape& tp, const Tape::Node& self) {
                          if (Matrix* g = tp.grad_target(ix))
                            g->colwise() += (self.grad.col(0) * inv).eval();
                        })};
}

Var sum_all(Var x) {
  Tape& t = tape_of(x);
  Matrix y(1, 1);
  y(0, 0) = t.value(x).sum();
  bool rg = t.wants_grad(x);
  int ix = x.id;
  return Var{&t, t.emit(std::move(y), rg,
                        [ix](Tape& tp, const Tape::Node& self) {
                          if (Matrix* g = tp.grad_target(ix))
                            g->array() += self.grad(0, 0);
                        })};
}

Var concat_cols(const std::vector<Var>& xs) {
  if (xs.empty()) throw NumericError("concat_cols: no inputs");
  Tape& t = tape_of(xs.front());
  Index rows = t.value(xs.front()).rows();
  Index cols = 0;
  bool rg = false;
  for (Var v : xs) {
    if (v.tape != &t) throw NumericError("concat_cols: tape mismatch");
    if (t.value(v).rows() != rows) throw NumericError("concat_cols: row mismatch");
    cols += t.value(v).cols();
    rg = rg || t.wants_grad(v);
  }
  Matrix y(rows, cols);
  std::vector<int> ids;
  std::vector<Index> offs;
  Index at = 0;
  for (Var v : xs) {
    const Matrix& p = t.value(v);
    y.middleCols(at, p.cols()) = p;
    ids.push_back(v.id);
    offs.push_back(at);
    at += p.cols();
  }
  return Var{&t, t.emit(std::move(y), rg,
                        [ids, offs](Tape& tp, const Tape::Node& self) {
                          for (std::size_t k = 0; k < ids.size(); ++k) {
                            if (Matrix* g = tp.grad_target(ids[k]))
                              *g += self.grad.middleCols(offs[k], g->cols());
                          }
                        })};
}

Var concat_rows(const std::vector<Var>& xs) {
  if (xs.empty()) throw NumericError("concat_rows: no inputs");
  Tape& t = tape_of(xs.front());
  Index cols = t.value(xs.front()).cols();
  Index rows = 0;
  bool rg = false;
  for (Var v : xs) {
    if (v.tape != &t) throw NumericError("concat_rows: tape mismatch");
    if (t.value(v).cols() != cols) throw NumericError("concat_rows: col mismatch");
    rows += t.value(v).rows();
    rg = rg || t.wants_grad(v);
  }
  Matrix y(rows, cols);
  std::vector<int> ids;
  std::vector<Index> offs;
  Index at = 0;
  for (Var v : xs) {
    const Matrix& p = t.value(v);
    y.middleRows(at, p.rows()) = p;
    ids.push_back(v.id);
    offs.push_back(at);
    at += p.rows();
  }
  return Var{&t, t.emit(std::move(y), rg,
                        [ids, offs](Tape& tp, const Tape::Node& self) {
                          for (std::size_t k = 0; k < ids.size(); ++k) {
                            if (Matrix* g = tp.grad_target(ids[k]))
                              *g += self.grad.middleRows(offs[k], g->rows());
                          }
                        })};
}

Var slice_cols(Var x, Index first, Index n) {
  Tape& t = tape_of(x);
  const Matrix& X = t.value(x);
  if (first < 0 || n < 0 || first + n > X.cols())
    throw NumericError("slice_cols: out of range");
  Matrix y = X.middleCols(first, n);
  bool rg = t.wants_grad(x);
  int ix = x.id;
  return Var{&t, t.emit(std::move(y), rg,
                        [ix, first, n](Tape& tp, const Tape::Node& self) {
                          if (Matrix* g = tp.grad_target(ix))
                            g->middleCols(first, n) += self.grad;
                        })};
}

Var slice_rows(Var x, Index first, Index n) {
  Tape& t = tape_of(x);
  const Matrix& X = t.value(x);
  if (first < 0 || n < 0 || first + n > X.rows())
    throw NumericError("slice_rows: out of range");
  Matrix y = X.middleRows(first, n);
  bool rg = t.wants_grad(x);
  int ix = x.id;
  return Var{&t, t.emit(std::move(y), rg,
                        [ix, first, n](Tape& tp, const Tape::Node& self) {
                          if (Matrix* g = tp.grad_target(ix))
                            g->middleRows(first, n) += self.grad;
                        })};
}

Var pad_cols(Var x, Index new_cols) {
  Tape& t = tape_of(x);
  const Matrix& X = t.value(x);
  if (new_cols < X.cols()) throw NumericError("pad_cols: target narrower than input");
  Matrix y = Matrix::Zero(X.rows(), new_cols);
  y.leftCols(X.cols()) = X;
  bool rg = t.wants_grad(x);
  int ix = x.id;
  return Var{&t, t.emit(std::move(y), rg,
                        [ix](Tape& tp, const Tape::Node& self) {
                          if (Matrix* g = tp.grad_target(ix))
                            *g += self.grad.leftCols(g->cols());
                        })};
}

namespace {
Matrix shift_rows_value(const Matrix& x, int offset) {
  Matrix y = Matrix::Zero(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    Index src = i + offset;
    if (src >= 0 && src < x.rows()) y.row(i) = x.row(src);
  }
  return y;
}
}  // namespace

Var shift_rows(Var x, int offset) {
  Tape& t = tape_of(x);
  Matrix y = shift_rows_value(t.value(x), offset);
  bool rg = t.wants_grad(x);
  int ix = x.id;
  return Var{&t, t.emit(std::move(y), rg,
                        [ix, offset](Tape& tp, const Tape::Node& self) {
                          if (Matrix* g = tp.grad_target(ix))
                            *g += shift_rows_value(self.grad, -offset);
                        })};
}

Var gather_rows(Var table, std::vector<int> ids) {
  Tape& t = tape_of(table);
  const Matrix& T = t.value(table);
  Matrix y(static_cast<Index>(ids.size()), T.cols());
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (ids[k] < 0 || ids[k] >= T.rows())
      throw NumericError("gather_rows: id out of range");
    y.row(static_cast<Index>(k)) = T.row(ids[k]);
  }
  bool rg = t.wants_grad(table);
  int it = table.id;
  return Var{&t, t.emit(std::move(y), rg,
                        [it, ids = std::move(ids)](Tape& tp, const Tape::Node& self) {
                          if (Matrix* g = tp.grad_target(it)) {
                            for (std::size_t k = 0; k < ids.size(); ++k)
                              g->row(ids[k]) += self.grad.row(static_cast<Index>(k));
                          }
                        })};
}

Var col_max(Var x) {
  Tape& t = tape_of(x);
  const Matrix& X = t.value(x);
  if (X.rows() == 0) throw NumericError("col_max: empty input");
  Matrix y(1, X.cols());
  std::vector<Index> arg(static_cast<std::size_t>(X.cols()), 0);
  for (Index j = 0; j < X.cols(); ++j) {
    Index best = 0;
    for (Index i = 1; i < X.rows(); ++i)
      if (X(i, j) > X(best, j)) best = i;  // strict: first max wins
    arg[static_cast<std::size_t>(j)] = best;
    y(0, j) = X(best, j);
  }
  bool rg = t.wants_grad(x);
  int ix = x.id;
  return Var{&t, t.emit(std::move(y), rg,
                        [ix, arg = std::move(arg)](Tape& tp, const Tape::Node& self) {
                          if (Matrix* g = tp.grad_target(ix)) {
                            for (Index j = 0; j < self.grad.cols(); ++j)
                              (*g)(arg[static_cast<std::size_t>(j)], j) += self.grad(0, j);
                          }
                        })};
}

// ---------------------------------------------------------------------------
// softmax and loss pieces

Matrix softmax_rows_value(const Matrix& x, const Matrix* additive_mask) {
  if (additive_mask &&
      (additive_mask->rows() != x.rows() || additive_mask->cols() != x.cols()))
    throw NumericError("softmax_rows: mask shape mismatch");
  Matrix p(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    if (additive_mask) {
      bool any_open = false;
      for (Index j = 0; j < x.cols(); ++j)
        if (!is_masked_logit((*additive_mask)(i, j))) {
          any_open = true;
          break;
        }
      if (!any_open) throw NumericError("softmax_rows: fully masked row");
    }
    Eigen::Array<Scalar, 1, Eigen::Dynamic> z = x.row(i).array();
    if (additive_mask) z += additive_mask->row(i).array();
    Scalar m = z.maxCoeff();
    Eigen::Array<Scalar, 1, Eigen::Dynamic> e = (z - m).exp();
    p.row(i) = (e / e.sum()).matrix();
    if (additive_mask) {
      for (Index j = 0; j < x.cols(); ++j)
        if (is_masked_logit((*additive_mask)(i, j))) p(i, j) = 0.0;
    }
  }
  return p;
}

Var softmax_rows(Var x, const Matrix* additive_mask) {
  Tape& t = tape_of(x);
  Matrix y = softmax_rows_value(t.value(x), additive_mask);
  bool rg = t.wants_grad(x);
  int ix = x.id;
  // Masked entries hold exact zeros, so the standard Jacobian leaves them
  // with zero gradient and the mask needs no handling here.
  int id = t.emit(std::move(y), rg, [ix](Tape& tp, const Tape::Node& self) {
    if (Matrix* g = tp.grad_target(ix)) {
      for (Index i = 0; i < self.value.rows(); ++i) {
        auto p = self.value.row(i).array();
        auto gy = self.grad.row(i).array();
        Scalar dot = (gy * p).sum();
        g->row(i) += (p * (gy - dot)).matrix();
      }
    }
  });
  t.note_softmax(id);
  return Var{&t, id};
}

Var nll_pick(Var probs, std::vector<int> targets, Scalar clamp,
             int* clamp_count) {
  Tape& t = tape_of(probs);
  const Matrix& P = t.value(probs);
  if (static_cast<Index>(targets.size()) != P.rows())
    throw NumericError("nll_pick: one target per row required");
  Scalar s = 0.0;
  int clamped = 0;
  for (Index r = 0; r < P.rows(); ++r) {
    int c = targets[static_cast<std::size_t>(r)];
    if (c < 0 || c >= P.cols()) throw NumericError("nll_pick: target out of range");
    Scalar v = P(r, c);
    if (v < clamp) {
      ++clamped;
      v = clamp;
    }
    s -= std::log(v);
  }
  if (clamp_count) *clamp_count += clamped;
  Matrix y(1, 1);
  y(0, 0) = s;
  bool rg = t.wants_grad(probs);
  int ip = probs.id;
  return Var{&t, t.emit(std::move(y), rg,
                        [ip, clamp, targets = std::move(targets)](
                            Tape& tp, const Tape::Node& self) {
                          Matrix* g = tp.grad_target(ip);
                          if (!g) return;
                          Scalar gy = self.grad(0, 0);
                          const Matrix& P0 = tp.node(ip).value;
                          for (Index r = 0; r < P0.rows(); ++r) {
                            int c = targets[static_cast<std::size_t>(r)];
                            Scalar v = P0(r, c);
                            if (v >= clamp) (*g)(r, c) -= gy / v;
                          }
                        })};
}

Var coverage_steps(Var scores) {
  Tape& t = tape_of(scores);
  const Matrix& S = t.value(scores);
  Index T = S.rows(), n = S.cols();
  Matrix y(T, 1);
  Eigen::Array<Scalar, 1, Eigen::Dynamic> cum =
      Eigen::Array<Scalar, 1, Eigen::Dynamic>::Zero(n);
  for (Index tt = 0; tt < T; ++tt) {
    y(tt, 0) = S.row(tt).array().min(cum).sum();
    cum += S.row(tt).array();
  }
  bool rg = t.wants_grad(scores);
  int is = scores.id;
  return Var{&t, t.emit(std::move(y), rg, [is](Tape& tp, const Tape::Node& self) {
                Matrix* g = tp.grad_target(is);
                if (!g) return;
                const Matrix& S0 = tp.node(is).value;
                Index T0 = S0.rows(), n0 = S0.cols();
                // Recompute cumulative rows, then walk steps backwards.
                Matrix cum = Matrix::Zero(T0, n0);
                for (Index tt = 1; tt < T0; ++tt)
                  cum.row(tt) = cum.row(tt - 1) + S0.row(tt - 1);
                // carry(j) collects grads routed through later steps' cumulative sums
                Eigen::Array<Scalar, 1, Eigen::Dynamic> carry =
                    Eigen::Array<Scalar, 1, Eigen::Dynamic>::Zero(n0);
                for (Index tt = T0 - 1; tt >= 0; --tt) {
                  Scalar gy = self.grad(tt, 0);
                  for (Index j = 0; j < n0; ++j) {
                    bool cur_side = S0(tt, j) <= cum(tt, j);
                    (*g)(tt, j) += carry(j) + (cur_side ? gy : 0.0);
                    if (!cur_side) carry(j) += gy;
                  }
                }
              })};
}

Var dropout(Var x, Scalar keep, std::mt19937_64& rng) {
  if (keep <= 0.0 || keep > 1.0) throw NumericError("dropout: keep must be in (0, 1]");
  Tape& t = tape_of(x);
  if (keep == 1.0) return x;
  const Matrix& X = t.value(x);
  std::bernoulli_distribution keep_dist(keep);
  Matrix m(X.rows(), X.cols());
  for (Index i = 0; i < X.rows(); ++i)
    for (Index j = 0; j < X.cols(); ++j)
      m(i, j) = keep_dist(rng) ? 1.0 / keep : 0.0;
  return mul_const(x, std::move(m));
}

}  // namespace daanet::ad
