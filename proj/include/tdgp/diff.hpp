#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Core>

#include "tdgp/errors.hpp"

namespace tdgp::diff {

enum class Op : std::uint8_t {
  kLeaf,
  kAdd,
  kSub,
  kMul,       // elementwise, scalar broadcast on either side
  kMatMul,
  kTranspose,
  kExp,
  kLog,
  kSqrt,
  kSum,       // reduce to 1x1
  kTrace,
  kCholesky,  // lower factor of a symmetric positive-definite matrix
  kTriSolve,  // L x = b (or L^T x = b), L lower-triangular
  kLogSigmoid,
  kSigmoid,
  kDiag,      // diagonal of a square matrix as a column vector
  kDiagEmbed, // column vector to diagonal matrix
  kClampMin,  // max(x, lo) elementwise
  kScale,     // multiply by a compile-time constant
};

const char* op_name(Op op);

class Tape;

// Lightweight handle to a tape node. Shape is fixed at creation; the adjoint
// produced by backward() has the same shape as the value.
class Var {
 public:
  Var() = default;

  const Eigen::MatrixXd& value() const;
  Eigen::Index rows() const;
  Eigen::Index cols() const;
  bool requires_grad() const;
  bool valid() const { return tape_ != nullptr; }

  Tape* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Reverse-mode tape over dense real matrices. Forward values are computed
// eagerly as nodes are recorded; backward() replays the adjoint rules in
// reverse topological order (which is simply reverse recording order).
// Adjoints accumulate additively when a Var is used multiple times.
//
// A tape is confined to one logical thread; distinct tapes are independent.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Eigen::MatrixXd value, bool requires_grad = false);
  Var scalar(double value);  // 1x1 constant
  Var constant(Eigen::MatrixXd value) { return leaf(std::move(value), false); }

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var sqrt(Var a);
  Var sum(Var a);
  Var trace(Var a);
  Var cholesky(Var a);
  Var tri_solve(Var l, Var b, bool transpose_l);
  Var log_sigmoid(Var a);
  Var sigmoid(Var a);
  Var diag(Var a);
  Var diag_embed(Var a);
  Var clamp_min(Var a, double lo);
  Var scale(Var a, double factor);

  // Seeds d(root)/d(root) = 1 and accumulates adjoints. root must be 1x1.
  void backward(Var root);

  // Adjoint of v after backward(); zero matrix if v did not influence root.
  Eigen::MatrixXd grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }
  void clear();

  const Eigen::MatrixXd& value_of(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool node_requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

 private:
  struct Node {
    Op op = Op::kLeaf;
    int a = -1;
    int b = -1;
    double aux = 0.0;       // scale factor / clamp threshold
    bool trans = false;     // tri_solve: solve L^T x = b
    bool requires_grad = false;
    Eigen::MatrixXd value;
  };

  Var push(Node node);
  const Node& node(Var v) const;
  void check_same_tape(Var v) const;
  Eigen::MatrixXd& adjoint(int id);

  std::vector<Node> nodes_;
  std::vector<Eigen::MatrixXd> adjoints_;
  bool backward_done_ = false;
};

// One evaluation of a scalar function together with its analytic gradient.
struct GradEval {
  double value = 0.0;
  Eigen::VectorXd grad;
};

using ValueGradFn = std::function<GradEval(const Eigen::VectorXd&)>;

// Central-difference check of an analytic gradient. Returns the maximum over
// coordinates of |analytic_i - central_i| / max(1, |analytic_i|). Coordinates
// with active[i] == false are skipped (frozen parameters).
double grad_check(const ValueGradFn& f, const Eigen::VectorXd& theta, double h,
                  const std::vector<bool>* active = nullptr);

// Adjoints of `vars` flattened (column-major per var) into one vector, after
// backward() has run on the tape.
Eigen::VectorXd collect_flat_grads(const Tape& tape, const std::vector<Var>& vars);

}  // namespace tdgp::diff
