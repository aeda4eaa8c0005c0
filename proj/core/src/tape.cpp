#include "dsdgp/tape.hpp"

#include <utility>

#include "dsdgp/errors.hpp"
#include "dsdgp/linalg.hpp"

namespace dsdgp {

namespace {

Mat scalar_mat(double x) {
  Mat m(1, 1);
  m(0, 0) = x;
  return m;
}

void check_same_shape(const Expr& a, const Expr& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionMismatch(std::string(op) + ": operand shapes differ");
}

void check_scalar(const Expr& s, const char* op) {
  if (s.rows() != 1 || s.cols() != 1)
    throw DimensionMismatch(std::string(op) + ": expected a 1x1 operand");
}

void check_same_tape(const Expr& a, const Expr& b, const char* op) {
  if (a.tape != b.tape) throw InvalidInput(std::string(op) + ": operands from different tapes");
}

}  // namespace

Eigen::Index Expr::rows() const { return tape->val(id).rows(); }
Eigen::Index Expr::cols() const { return tape->val(id).cols(); }
const Mat& Expr::value() const { return tape->val(id); }

const Mat& GradientTape::grad_for(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return grads[i];
  throw UnregisteredParameter("no gradient entry for parameter '" + std::string(name) + "'");
}

Expr Tape::constant(Mat value) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = false;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Expr Tape::param(const Mat& value, int slot, std::string name) {
  if (slot < 0) throw InvalidInput("param: negative slot");
  Node n;
  n.value = value;
  n.needs_grad = true;
  n.param_slot = slot;
  nodes_.push_back(std::move(n));
  int id = static_cast<int>(nodes_.size()) - 1;
  if (slots_.size() <= static_cast<std::size_t>(slot)) slots_.resize(slot + 1, {-1, {}});
  if (slots_[slot].first != -1)
    throw InvalidInput("param: slot " + std::to_string(slot) + " registered twice");
  slots_[slot] = {id, std::move(name)};
  return {this, id};
}

Expr Tape::make(Mat value, std::vector<int> parents, std::function<void(Tape&, int)> backward_fn) {
  Node n;
  n.value = std::move(value);
  for (int p : parents)
    if (nodes_[static_cast<std::size_t>(p)].needs_grad) n.needs_grad = true;
  if (n.needs_grad) n.backward_fn = std::move(backward_fn);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

GradientTape Tape::backward(Expr root) {
  if (root.tape != this) throw InvalidInput("backward: root from a different tape");
  const auto& rv = val(root.id);
  if (rv.rows() != 1 || rv.cols() != 1)
    throw InvalidInput("backward: root must be a 1x1 scalar node");

  nodes_[static_cast<std::size_t>(root.id)].grad = scalar_mat(1.0);
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.needs_grad || n.grad.size() == 0 || !n.backward_fn) continue;
    n.backward_fn(*this, i);
  }

  GradientTape out;
  out.value = rv(0, 0);
  out.names.reserve(slots_.size());
  out.grads.reserve(slots_.size());
  for (std::size_t s = 0; s < slots_.size(); ++s) {
    auto [id, name] = slots_[s];
    if (id < 0) throw InvalidInput("backward: parameter slots are not dense");
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    out.names.push_back(name);
    out.grads.push_back(n.grad.size() != 0 ? n.grad : Mat::Zero(n.value.rows(), n.value.cols()));
  }
  return out;
}

// ---- primitives -----------------------------------------------------------

Expr add(Expr a, Expr b) {
  check_same_tape(a, b, "add");
  check_same_shape(a, b, "add");
  Tape& t = *a.tape;
  return t.make(t.val(a.id) + t.val(b.id), {a.id, b.id}, [a = a.id, b = b.id](Tape& t, int self) {
    t.acc(a, t.grad(self));
    t.acc(b, t.grad(self));
  });
}

Expr sub(Expr a, Expr b) {
  check_same_tape(a, b, "sub");
  check_same_shape(a, b, "sub");
  Tape& t = *a.tape;
  return t.make(t.val(a.id) - t.val(b.id), {a.id, b.id}, [a = a.id, b = b.id](Tape& t, int self) {
    t.acc(a, t.grad(self));
    t.acc(b, -t.grad(self));
  });
}

Expr hadamard(Expr a, Expr b) {
  check_same_tape(a, b, "hadamard");
  check_same_shape(a, b, "hadamard");
  Tape& t = *a.tape;
  return t.make(t.val(a.id).cwiseProduct(t.val(b.id)), {a.id, b.id},
                [a = a.id, b = b.id](Tape& t, int self) {
                  t.acc(a, t.grad(self).cwiseProduct(t.val(b)));
                  t.acc(b, t.grad(self).cwiseProduct(t.val(a)));
                });
}

Expr neg(Expr a) { return scale(a, -1.0); }

Expr scale(Expr a, double c) {
  Tape& t = *a.tape;
  return t.make(c * t.val(a.id), {a.id},
                [a = a.id, c](Tape& t, int self) { t.acc(a, c * t.grad(self)); });
}

Expr scale_by(Expr a, Expr s) {
  check_same_tape(a, s, "scale_by");
  check_scalar(s, "scale_by");
  Tape& t = *a.tape;
  return t.make(t.val(s.id)(0, 0) * t.val(a.id), {a.id, s.id},
                [a = a.id, s = s.id](Tape& t, int self) {
                  t.acc(a, t.val(s)(0, 0) * t.grad(self));
                  t.acc(s, scalar_mat(t.grad(self).cwiseProduct(t.val(a)).sum()));
                });
}

Expr matmul(Expr a, Expr b, bool trans_a, bool trans_b) {
  check_same_tape(a, b, "matmul");
  Tape& t = *a.tape;
  const Mat& av = t.val(a.id);
  const Mat& bv = t.val(b.id);
  Eigen::Index inner_a = trans_a ? av.rows() : av.cols();
  Eigen::Index inner_b = trans_b ? bv.cols() : bv.rows();
  if (inner_a != inner_b) throw DimensionMismatch("matmul: inner dimensions differ");
  Mat v;
  if (!trans_a && !trans_b)
    v.noalias() = av * bv;
  else if (trans_a && !trans_b)
    v.noalias() = av.transpose() * bv;
  else if (!trans_a && trans_b)
    v.noalias() = av * bv.transpose();
  else
    v.noalias() = av.transpose() * bv.transpose();
  return t.make(std::move(v), {a.id, b.id},
                [a = a.id, b = b.id, trans_a, trans_b](Tape& t, int self) {
                  const Mat& g = t.grad(self);
                  const Mat& av = t.val(a);
                  const Mat& bv = t.val(b);
                  if (!trans_a)
                    t.acc(a, trans_b ? (g * bv).eval() : (g * bv.transpose()).eval());
                  else
                    t.acc(a, trans_b ? (bv.transpose() * g.transpose()).eval()
                                     : (bv * g.transpose()).eval());
                  if (!trans_b)
                    t.acc(b, trans_a ? (av * g).eval() : (av.transpose() * g).eval());
                  else
                    t.acc(b, trans_a ? (g.transpose() * av.transpose()).eval()
                                     : (g.transpose() * av).eval());
                });
}

Expr transpose(Expr a) {
  Tape& t = *a.tape;
  return t.make(t.val(a.id).transpose(), {a.id},
                [a = a.id](Tape& t, int self) { t.acc(a, t.grad(self).transpose()); });
}

Expr cw_exp(Expr a) {
  Tape& t = *a.tape;
  return t.make(t.val(a.id).array().exp().matrix(), {a.id}, [a = a.id](Tape& t, int self) {
    t.acc(a, t.grad(self).cwiseProduct(t.val(self)));
  });
}

Expr cw_log(Expr a) {
  Tape& t = *a.tape;
  return t.make(t.val(a.id).array().log().matrix(), {a.id}, [a = a.id](Tape& t, int self) {
    t.acc(a, t.grad(self).cwiseQuotient(t.val(a)));
  });
}

Expr cw_sqrt(Expr a) {
  Tape& t = *a.tape;
  return t.make(t.val(a.id).array().sqrt().matrix(), {a.id}, [a = a.id](Tape& t, int self) {
    t.acc(a, (t.grad(self).array() * 0.5 / t.val(self).array()).matrix());
  });
}

Expr cw_square(Expr a) {
  Tape& t = *a.tape;
  return t.make(t.val(a.id).array().square().matrix(), {a.id}, [a = a.id](Tape& t, int self) {
    t.acc(a, 2.0 * t.grad(self).cwiseProduct(t.val(a)));
  });
}

Expr clamp_min(Expr a, double floor) {
  Tape& t = *a.tape;
  return t.make(t.val(a.id).cwiseMax(floor), {a.id}, [a = a.id, floor](Tape& t, int self) {
    Mat mask = (t.val(a).array() > floor).cast<double>().matrix();
    t.acc(a, t.grad(self).cwiseProduct(mask));
  });
}

Expr add_rowvec(Expr a, Expr r) {
  check_same_tape(a, r, "add_rowvec");
  Tape& t = *a.tape;
  if (r.rows() != 1 || r.cols() != a.cols())
    throw DimensionMismatch("add_rowvec: expected a 1 x cols(a) operand");
  Mat v = t.val(a.id);
  v.rowwise() += t.val(r.id).row(0);
  return t.make(std::move(v), {a.id, r.id}, [a = a.id, r = r.id](Tape& t, int self) {
    t.acc(a, t.grad(self));
    t.acc(r, t.grad(self).colwise().sum());
  });
}

Expr add_colvec(Expr a, Expr c) {
  check_same_tape(a, c, "add_colvec");
  Tape& t = *a.tape;
  if (c.cols() != 1 || c.rows() != a.rows())
    throw DimensionMismatch("add_colvec: expected a rows(a) x 1 operand");
  Mat v = t.val(a.id);
  v.colwise() += t.val(c.id).col(0);
  return t.make(std::move(v), {a.id, c.id}, [a = a.id, c = c.id](Tape& t, int self) {
    t.acc(a, t.grad(self));
    t.acc(c, t.grad(self).rowwise().sum());
  });
}

Expr mul_rowvec(Expr a, Expr r) {
  check_same_tape(a, r, "mul_rowvec");
  Tape& t = *a.tape;
  if (r.rows() != 1 || r.cols() != a.cols())
    throw DimensionMismatch("mul_rowvec: expected a 1 x cols(a) operand");
  Mat v = t.val(a.id);
  v.array().rowwise() *= t.val(r.id).row(0).array();
  return t.make(std::move(v), {a.id, r.id}, [a = a.id, r = r.id](Tape& t, int self) {
    Mat ga = t.grad(self);
    ga.array().rowwise() *= t.val(r).row(0).array();
    t.acc(a, ga);
    t.acc(r, t.grad(self).cwiseProduct(t.val(a)).colwise().sum());
  });
}

Expr rowsum(Expr a) {
  Tape& t = *a.tape;
  return t.make(t.val(a.id).rowwise().sum(), {a.id}, [a = a.id](Tape& t, int self) {
    t.acc(a, t.grad(self).col(0).replicate(1, t.val(a).cols()));
  });
}

Expr colsum(Expr a) {
  Tape& t = *a.tape;
  return t.make(t.val(a.id).colwise().sum(), {a.id}, [a = a.id](Tape& t, int self) {
    t.acc(a, t.grad(self).row(0).replicate(t.val(a).rows(), 1));
  });
}

Expr sum(Expr a) {
  Tape& t = *a.tape;
  return t.make(scalar_mat(t.val(a.id).sum()), {a.id}, [a = a.id](Tape& t, int self) {
    t.acc(a, Mat::Constant(t.val(a).rows(), t.val(a).cols(), t.grad(self)(0, 0)));
  });
}

Expr vcat(const std::vector<Expr>& parts) {
  if (parts.empty()) throw InvalidInput("vcat: no operands");
  Tape& t = *parts[0].tape;
  Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  std::vector<int> ids;
  for (const Expr& p : parts) {
    check_same_tape(parts[0], p, "vcat");
    if (p.cols() != cols) throw DimensionMismatch("vcat: column counts differ");
    rows += p.rows();
    ids.push_back(p.id);
  }
  Mat v(rows, cols);
  Eigen::Index off = 0;
  for (const Expr& p : parts) {
    v.middleRows(off, p.rows()) = t.val(p.id);
    off += p.rows();
  }
  return t.make(std::move(v), ids, [ids](Tape& t, int self) {
    Eigen::Index off = 0;
    for (int id : ids) {
      Eigen::Index r = t.val(id).rows();
      t.acc(id, t.grad(self).middleRows(off, r));
      off += r;
    }
  });
}

Expr take_diag(Expr a) {
  Tape& t = *a.tape;
  if (a.rows() != a.cols()) throw DimensionMismatch("take_diag: matrix is not square");
  Mat v = t.val(a.id).diagonal();
  return t.make(std::move(v), {a.id}, [a = a.id](Tape& t, int self) {
    Mat ga = Mat::Zero(t.val(a).rows(), t.val(a).cols());
    ga.diagonal() = t.grad(self).col(0);
    t.acc(a, ga);
  });
}

Expr add_scaled_identity(Expr a, Expr s) {
  check_same_tape(a, s, "add_scaled_identity");
  check_scalar(s, "add_scaled_identity");
  Tape& t = *a.tape;
  if (a.rows() != a.cols()) throw DimensionMismatch("add_scaled_identity: matrix is not square");
  Mat v = t.val(a.id);
  v.diagonal().array() += t.val(s.id)(0, 0);
  return t.make(std::move(v), {a.id, s.id}, [a = a.id, s = s.id](Tape& t, int self) {
    t.acc(a, t.grad(self));
    t.acc(s, scalar_mat(t.grad(self).trace()));
  });
}

Expr lower_from_unconstrained(Expr p) {
  Tape& t = *p.tape;
  if (p.rows() != p.cols())
    throw DimensionMismatch("lower_from_unconstrained: matrix is not square");
  const Mat& pv = t.val(p.id);
  Mat v = pv.triangularView<Eigen::StrictlyLower>();
  v.diagonal() = pv.diagonal().array().exp();
  return t.make(std::move(v), {p.id}, [p = p.id](Tape& t, int self) {
    Mat gp = t.grad(self).triangularView<Eigen::StrictlyLower>();
    gp.diagonal() = t.grad(self).diagonal().cwiseProduct(t.val(self).diagonal());
    t.acc(p, gp);
  });
}

Expr cholesky(Expr a, double base_jitter, double* jitter_used) {
  Tape& t = *a.tape;
  CholeskyResult res = cholesky_with_jitter(t.val(a.id), base_jitter);
  if (jitter_used) *jitter_used = res.jitter;
  return t.make(std::move(res.l.m), {a.id}, [a = a.id](Tape& t, int self) {
    // Adjoint of A -> chol(A): Abar = 0.5 (S + S^T) with
    // S = L^{-T} Phi(L^T Gbar) L^{-1}, Phi = lower triangle, halved diagonal.
    const Mat& L = t.val(self);
    Mat G = t.grad(self).triangularView<Eigen::Lower>();
    Mat P = L.transpose() * G;
    Mat phi = P.triangularView<Eigen::Lower>();
    phi.diagonal() *= 0.5;
    Mat s1 = L.transpose().triangularView<Eigen::Upper>().solve(phi);
    Mat s2 = L.transpose().triangularView<Eigen::Upper>().solve(s1.transpose()).transpose();
    t.acc(a, (0.5 * (s2 + s2.transpose())).eval());
  });
}

Expr tri_solve(Expr l, Expr b, bool transposed) {
  check_same_tape(l, b, "tri_solve");
  Tape& t = *l.tape;
  const Mat& lv = t.val(l.id);
  if (lv.rows() != lv.cols()) throw DimensionMismatch("tri_solve: factor is not square");
  if (lv.rows() != b.rows()) throw DimensionMismatch("tri_solve: factor dim != rhs rows");
  Mat x;
  if (transposed)
    x = lv.transpose().triangularView<Eigen::Upper>().solve(t.val(b.id));
  else
    x = lv.triangularView<Eigen::Lower>().solve(t.val(b.id));
  return t.make(std::move(x), {l.id, b.id},
                [l = l.id, b = b.id, transposed](Tape& t, int self) {
                  const Mat& L = t.val(l);
                  const Mat& g = t.grad(self);
                  // bbar solves with the opposite transposition; the factor
                  // adjoint is -bbar x^T for L x = b and -x bbar^T for
                  // L^T x = b, masked to the lower triangle.
                  Mat bbar;
                  if (transposed)
                    bbar = L.triangularView<Eigen::Lower>().solve(g);
                  else
                    bbar = L.transpose().triangularView<Eigen::Upper>().solve(g);
                  Mat lbar = transposed ? (-(t.val(self) * bbar.transpose())).eval()
                                        : (-(bbar * t.val(self).transpose())).eval();
                  lbar.triangularView<Eigen::StrictlyUpper>().setZero();
                  t.acc(b, bbar);
                  t.acc(l, lbar);
                });
}

GradientTape gradient_of(
    const std::vector<ParamRef>& params,
    const std::function<Expr(Tape&, const std::vector<Expr>&)>& objective) {
  Tape t;
  std::vector<Expr> leaves;
  leaves.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i)
    leaves.push_back(t.param(*params[i].value, static_cast<int>(i), params[i].name));
  Expr root = objective(t, leaves);
  return t.backward(root);
}

Binder::Binder(Tape& t, const std::vector<ParamRef>& params, bool track_gradients)
    : tape_(&t), track_(track_gradients) {
  by_storage_.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    Expr e = track_ ? t.param(*params[i].value, static_cast<int>(i), params[i].name)
                    : t.constant(*params[i].value);
    by_storage_.emplace_back(params[i].value, e);
  }
}

Expr Binder::operator()(const Mat* storage) {
  for (const auto& [ptr, expr] : by_storage_)
    if (ptr == storage) return expr;
  if (track_)
    throw UnregisteredParameter("Binder: parameter storage was not registered");
  // Value-only evaluation admits any storage as a constant.
  Expr e = tape_->constant(*storage);
  by_storage_.emplace_back(storage, e);
  return e;
}

}  // namespace dsdgp
