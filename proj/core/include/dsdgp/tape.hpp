#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "dsdgp/types.hpp"

namespace dsdgp {

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid as long as the tape is.
struct Expr {
  Tape* tape = nullptr;
  int id = -1;
  Eigen::Index rows() const;
  Eigen::Index cols() const;
  const Mat& value() const;
};

/// Reference to a named trainable parameter owned by a model.
struct ParamRef {
  std::string name;
  Mat* value;
};

/// Result of a backward pass: the scalar objective and one gradient entry
/// per registered parameter, in registration (slot) order. Gradients are
/// with respect to the unconstrained parameterization.
struct GradientTape {
  double value = 0.0;
  std::vector<std::string> names;
  std::vector<Mat> grads;
  const Mat& grad_for(std::string_view name) const;  // throws UnregisteredParameter
};

/// Dynamic reverse-mode tape over dense-matrix primitives.
///
/// A computation is recorded by building nodes through the free functions
/// below; `backward` then accumulates adjoints from a scalar root to every
/// parameter leaf. Nodes unreachable from a parameter are skipped. The tape
/// is single-owner and must not be shared across threads.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Expr constant(Mat value);

  /// Parameter leaf. Slots must be registered densely from 0 in the order
  /// the caller enumerates its parameters.
  Expr param(const Mat& value, int slot, std::string name);

  /// Low-level node constructor for fused operations with hand-written
  /// adjoints; `backward_fn(tape, self_id)` must accumulate into the
  /// parents via `acc`.
  Expr make(Mat value, std::vector<int> parents,
            std::function<void(Tape&, int)> backward_fn);

  /// Reverse pass from a 1x1 root. Returns one gradient per registered
  /// slot (zeros when the objective does not depend on the parameter).
  GradientTape backward(Expr root);

  const Mat& val(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
  const Mat& grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }

  /// Accumulate an adjoint contribution; no-op for nodes that do not
  /// require gradients.
  template <typename Derived>
  void acc(int id, const Eigen::MatrixBase<Derived>& g) {
    auto& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0)
      n.grad = g;
    else
      n.grad += g;
  }

  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool needs_grad = false;
    int param_slot = -1;
    std::function<void(Tape&, int)> backward_fn;
  };

  friend struct Expr;

  std::vector<Node> nodes_;
  std::vector<std::pair<int, std::string>> slots_;  // slot -> (node id, name)
};

// ---- primitives -----------------------------------------------------------

Expr add(Expr a, Expr b);
Expr sub(Expr a, Expr b);
Expr hadamard(Expr a, Expr b);
Expr neg(Expr a);
Expr scale(Expr a, double c);
Expr scale_by(Expr a, Expr s);          // s is 1x1, broadcast multiply
Expr matmul(Expr a, Expr b, bool trans_a = false, bool trans_b = false);
Expr transpose(Expr a);
Expr cw_exp(Expr a);
Expr cw_log(Expr a);
Expr cw_sqrt(Expr a);
Expr cw_square(Expr a);
Expr clamp_min(Expr a, double floor);   // gradient passes only where value > floor
Expr add_rowvec(Expr a, Expr r);        // r: 1 x cols(a)
Expr add_colvec(Expr a, Expr c);        // c: rows(a) x 1
Expr mul_rowvec(Expr a, Expr r);        // per-column scaling
Expr rowsum(Expr a);                    // rows x 1
Expr colsum(Expr a);                    // 1 x cols
Expr sum(Expr a);                       // 1 x 1
Expr vcat(const std::vector<Expr>& parts);
Expr take_diag(Expr a);                 // n x 1
Expr add_scaled_identity(Expr a, Expr s);  // a + s * I, s is 1x1

/// Lower-triangular factor from an unconstrained square matrix: strict
/// lower part copied, diagonal exponentiated, upper part zero. This is the
/// storage convention for variational covariance factors.
Expr lower_from_unconstrained(Expr p);

/// Cholesky factor of an SPD matrix with escalating jitter (see
/// cholesky_with_jitter). The jitter level is treated as a constant of the
/// differentiated computation; `jitter_used`, when non-null, receives it.
Expr cholesky(Expr a, double base_jitter, double* jitter_used = nullptr);

Expr tri_solve(Expr l, Expr b, bool transposed);

inline Expr operator+(Expr a, Expr b) { return add(a, b); }
inline Expr operator-(Expr a, Expr b) { return sub(a, b); }
inline Expr operator*(double c, Expr a) { return scale(a, c); }

/// Records `objective` over the given parameters and returns its value and
/// gradients. The builder receives one leaf per parameter, in order, and
/// must return a 1x1 node.
GradientTape gradient_of(
    const std::vector<ParamRef>& params,
    const std::function<Expr(Tape&, const std::vector<Expr>&)>& objective);

/// Maps parameter storage to tape leaves. When tracking gradients every
/// registered parameter becomes a leaf (slot order = registration order),
/// so each receives exactly one gradient entry per backward pass; otherwise
/// parameters enter the graph as constants.
class Binder {
 public:
  Binder(Tape& t, const std::vector<ParamRef>& params, bool track_gradients);

  /// Leaf node for a registered parameter; throws UnregisteredParameter for
  /// storage that was not in the registration list.
  Expr operator()(const Mat* storage);

  bool tracking() const { return track_; }

 private:
  Tape* tape_;
  bool track_;
  std::vector<std::pair<const Mat*, Expr>> by_storage_;
};

}  // namespace dsdgp
