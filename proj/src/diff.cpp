#include "tdgp/diff.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

namespace tdgp::diff {

namespace {

std::string shape_str(const Eigen::MatrixXd& m) {
  std::ostringstream os;
  os << "(" << m.rows() << "x" << m.cols() << ")";
  return os.str();
}

bool is_scalar(const Eigen::MatrixXd& m) { return m.rows() == 1 && m.cols() == 1; }

double sigmoid_stable(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sigmoid_stable(double x) {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

// Lower triangle with halved diagonal; the adjoint companion of the
// symmetrization in the Cholesky pullback.
Eigen::MatrixXd phi_lower(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd out = m.triangularView<Eigen::Lower>();
  out.diagonal() *= 0.5;
  return out;
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kMatMul: return "matmul";
    case Op::kTranspose: return "transpose";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kSqrt: return "sqrt";
    case Op::kSum: return "sum";
    case Op::kTrace: return "trace";
    case Op::kCholesky: return "cholesky";
    case Op::kTriSolve: return "tri_solve";
    case Op::kLogSigmoid: return "log_sigmoid";
    case Op::kSigmoid: return "sigmoid";
    case Op::kDiag: return "diag";
    case Op::kDiagEmbed: return "diag_embed";
    case Op::kClampMin: return "clamp_min";
    case Op::kScale: return "scale";
  }
  return "?";
}

const Eigen::MatrixXd& Var::value() const { return tape_->value_of(id_); }
Eigen::Index Var::rows() const { return value().rows(); }
Eigen::Index Var::cols() const { return value().cols(); }
bool Var::requires_grad() const { return tape_->node_requires_grad(id_); }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  backward_done_ = false;
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

const Tape::Node& Tape::node(Var v) const {
  check_same_tape(v);
  return nodes_[static_cast<std::size_t>(v.id())];
}

void Tape::check_same_tape(Var v) const {
  if (v.tape() != this)
    throw numeric_error("diff: Var does not belong to this tape");
}

Var Tape::leaf(Eigen::MatrixXd value, bool requires_grad) {
  Node n;
  n.op = Op::kLeaf;
  n.requires_grad = requires_grad;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::scalar(double value) {
  return leaf(Eigen::MatrixXd::Constant(1, 1, value), false);
}

Var Tape::add(Var a, Var b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  Node n;
  n.op = Op::kAdd;
  n.a = a.id();
  n.b = b.id();
  n.requires_grad = na.requires_grad || nb.requires_grad;
  if (is_scalar(na.value))
    n.value = nb.value.array() + na.value(0, 0);
  else if (is_scalar(nb.value))
    n.value = na.value.array() + nb.value(0, 0);
  else if (na.value.rows() == nb.value.rows() && na.value.cols() == nb.value.cols())
    n.value = na.value + nb.value;
  else
    throw numeric_error("add: operand shapes " + shape_str(na.value) + " and " +
                        shape_str(nb.value) + " do not conform");
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  Node n;
  n.op = Op::kSub;
  n.a = a.id();
  n.b = b.id();
  n.requires_grad = na.requires_grad || nb.requires_grad;
  if (is_scalar(na.value) && !is_scalar(nb.value))
    n.value = na.value(0, 0) - nb.value.array();
  else if (is_scalar(nb.value) && !is_scalar(na.value))
    n.value = na.value.array() - nb.value(0, 0);
  else if (na.value.rows() == nb.value.rows() && na.value.cols() == nb.value.cols())
    n.value = na.value - nb.value;
  else
    throw numeric_error("sub: operand shapes " + shape_str(na.value) + " and " +
                        shape_str(nb.value) + " do not conform");
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  Node n;
  n.op = Op::kMul;
  n.a = a.id();
  n.b = b.id();
  n.requires_grad = na.requires_grad || nb.requires_grad;
  if (is_scalar(na.value))
    n.value = nb.value * na.value(0, 0);
  else if (is_scalar(nb.value))
    n.value = na.value * nb.value(0, 0);
  else if (na.value.rows() == nb.value.rows() && na.value.cols() == nb.value.cols())
    n.value = na.value.cwiseProduct(nb.value);
  else
    throw numeric_error("mul: operand shapes " + shape_str(na.value) + " and " +
                        shape_str(nb.value) + " do not conform");
  return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  if (na.value.cols() != nb.value.rows())
    throw numeric_error("matmul: operand shapes " + shape_str(na.value) + " and " +
                        shape_str(nb.value) + " do not conform");
  Node n;
  n.op = Op::kMatMul;
  n.a = a.id();
  n.b = b.id();
  n.requires_grad = na.requires_grad || nb.requires_grad;
  n.value.noalias() = na.value * nb.value;
  return push(std::move(n));
}

Var Tape::transpose(Var a) {
  const Node& na = node(a);
  Node n;
  n.op = Op::kTranspose;
  n.a = a.id();
  n.requires_grad = na.requires_grad;
  n.value = na.value.transpose();
  return push(std::move(n));
}

Var Tape::exp(Var a) {
  const Node& na = node(a);
  Node n;
  n.op = Op::kExp;
  n.a = a.id();
  n.requires_grad = na.requires_grad;
  n.value = na.value.array().exp();
  return push(std::move(n));
}

Var Tape::log(Var a) {
  const Node& na = node(a);
  Node n;
  n.op = Op::kLog;
  n.a = a.id();
  n.requires_grad = na.requires_grad;
  n.value = na.value.array().log();
  return push(std::move(n));
}

Var Tape::sqrt(Var a) {
  const Node& na = node(a);
  Node n;
  n.op = Op::kSqrt;
  n.a = a.id();
  n.requires_grad = na.requires_grad;
  n.value = na.value.array().sqrt();
  return push(std::move(n));
}

Var Tape::sum(Var a) {
  const Node& na = node(a);
  Node n;
  n.op = Op::kSum;
  n.a = a.id();
  n.requires_grad = na.requires_grad;
  n.value = Eigen::MatrixXd::Constant(1, 1, na.value.sum());
  return push(std::move(n));
}

Var Tape::trace(Var a) {
  const Node& na = node(a);
  if (na.value.rows() != na.value.cols())
    throw numeric_error("trace: matrix " + shape_str(na.value) + " is not square");
  Node n;
  n.op = Op::kTrace;
  n.a = a.id();
  n.requires_grad = na.requires_grad;
  n.value = Eigen::MatrixXd::Constant(1, 1, na.value.trace());
  return push(std::move(n));
}

Var Tape::cholesky(Var a) {
  const Node& na = node(a);
  if (na.value.rows() != na.value.cols())
    throw numeric_error("cholesky: matrix " + shape_str(na.value) + " is not square");
  // Only the lower triangle of the input is read (treated as symmetric).
  Eigen::LLT<Eigen::MatrixXd> llt(na.value);
  if (llt.info() != Eigen::Success)
    throw numeric_error("cholesky: matrix " + shape_str(na.value) +
                        " is not positive definite");
  Node n;
  n.op = Op::kCholesky;
  n.a = a.id();
  n.requires_grad = na.requires_grad;
  n.value = llt.matrixL();
  return push(std::move(n));
}

Var Tape::tri_solve(Var l, Var b, bool transpose_l) {
  const Node& nl = node(l);
  const Node& nb = node(b);
  if (nl.value.rows() != nl.value.cols())
    throw numeric_error("tri_solve: factor " + shape_str(nl.value) + " is not square");
  if (nl.value.cols() != nb.value.rows())
    throw numeric_error("tri_solve: operand shapes " + shape_str(nl.value) + " and " +
                        shape_str(nb.value) + " do not conform");
  Node n;
  n.op = Op::kTriSolve;
  n.a = l.id();
  n.b = b.id();
  n.trans = transpose_l;
  n.requires_grad = nl.requires_grad || nb.requires_grad;
  if (transpose_l)
    n.value = nl.value.triangularView<Eigen::Lower>().transpose().solve(nb.value);
  else
    n.value = nl.value.triangularView<Eigen::Lower>().solve(nb.value);
  return push(std::move(n));
}

Var Tape::log_sigmoid(Var a) {
  const Node& na = node(a);
  Node n;
  n.op = Op::kLogSigmoid;
  n.a = a.id();
  n.requires_grad = na.requires_grad;
  n.value = na.value.unaryExpr([](double x) { return log_sigmoid_stable(x); });
  return push(std::move(n));
}

Var Tape::sigmoid(Var a) {
  const Node& na = node(a);
  Node n;
  n.op = Op::kSigmoid;
  n.a = a.id();
  n.requires_grad = na.requires_grad;
  n.value = na.value.unaryExpr([](double x) { return sigmoid_stable(x); });
  return push(std::move(n));
}

Var Tape::diag(Var a) {
  const Node& na = node(a);
  if (na.value.rows() != na.value.cols())
    throw numeric_error("diag: matrix " + shape_str(na.value) + " is not square");
  Node n;
  n.op = Op::kDiag;
  n.a = a.id();
  n.requires_grad = na.requires_grad;
  n.value = na.value.diagonal();
  return push(std::move(n));
}

Var Tape::diag_embed(Var a) {
  const Node& na = node(a);
  if (na.value.cols() != 1)
    throw numeric_error("diag_embed: expected a column vector, got " + shape_str(na.value));
  Node n;
  n.op = Op::kDiagEmbed;
  n.a = a.id();
  n.requires_grad = na.requires_grad;
  n.value = Eigen::MatrixXd(na.value.col(0).asDiagonal());
  return push(std::move(n));
}

Var Tape::clamp_min(Var a, double lo) {
  const Node& na = node(a);
  Node n;
  n.op = Op::kClampMin;
  n.a = a.id();
  n.aux = lo;
  n.requires_grad = na.requires_grad;
  n.value = na.value.cwiseMax(lo);
  return push(std::move(n));
}

Var Tape::scale(Var a, double factor) {
  const Node& na = node(a);
  Node n;
  n.op = Op::kScale;
  n.a = a.id();
  n.aux = factor;
  n.requires_grad = na.requires_grad;
  n.value = na.value * factor;
  return push(std::move(n));
}

Eigen::MatrixXd& Tape::adjoint(int id) {
  auto& adj = adjoints_[static_cast<std::size_t>(id)];
  if (adj.size() == 0) {
    const auto& v = nodes_[static_cast<std::size_t>(id)].value;
    adj = Eigen::MatrixXd::Zero(v.rows(), v.cols());
  }
  return adj;
}

void Tape::backward(Var root) {
  check_same_tape(root);
  const Node& r = node(root);
  if (!is_scalar(r.value))
    throw numeric_error("backward: root has shape " + shape_str(r.value) +
                        ", expected a 1x1 scalar");

  adjoints_.assign(nodes_.size(), Eigen::MatrixXd());
  adjoint(root.id())(0, 0) = 1.0;

  for (int i = root.id(); i >= 0; --i) {
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    const auto& g = adjoints_[static_cast<std::size_t>(i)];
    if (g.size() == 0 || !n.requires_grad || n.op == Op::kLeaf) continue;

    const bool grad_a = n.a >= 0 && nodes_[static_cast<std::size_t>(n.a)].requires_grad;
    const bool grad_b = n.b >= 0 && nodes_[static_cast<std::size_t>(n.b)].requires_grad;
    const Eigen::MatrixXd& av = n.a >= 0 ? nodes_[static_cast<std::size_t>(n.a)].value
                                         : n.value;
    const Eigen::MatrixXd& bv = n.b >= 0 ? nodes_[static_cast<std::size_t>(n.b)].value
                                         : n.value;

    switch (n.op) {
      case Op::kAdd: {
        if (grad_a) {
          if (is_scalar(av) && !is_scalar(g)) adjoint(n.a)(0, 0) += g.sum();
          else adjoint(n.a) += g;
        }
        if (grad_b) {
          if (is_scalar(bv) && !is_scalar(g)) adjoint(n.b)(0, 0) += g.sum();
          else adjoint(n.b) += g;
        }
        break;
      }
      case Op::kSub: {
        if (grad_a) {
          if (is_scalar(av) && !is_scalar(g)) adjoint(n.a)(0, 0) += g.sum();
          else adjoint(n.a) += g;
        }
        if (grad_b) {
          if (is_scalar(bv) && !is_scalar(g)) adjoint(n.b)(0, 0) -= g.sum();
          else adjoint(n.b) -= g;
        }
        break;
      }
      case Op::kMul: {
        if (is_scalar(av) && !is_scalar(bv)) {
          if (grad_a) adjoint(n.a)(0, 0) += (g.array() * bv.array()).sum();
          if (grad_b) adjoint(n.b) += g * av(0, 0);
        } else if (is_scalar(bv) && !is_scalar(av)) {
          if (grad_a) adjoint(n.a) += g * bv(0, 0);
          if (grad_b) adjoint(n.b)(0, 0) += (g.array() * av.array()).sum();
        } else {
          if (grad_a) adjoint(n.a) += g.cwiseProduct(bv);
          if (grad_b) adjoint(n.b) += g.cwiseProduct(av);
        }
        break;
      }
      case Op::kMatMul: {
        if (grad_a) adjoint(n.a).noalias() += g * bv.transpose();
        if (grad_b) adjoint(n.b).noalias() += av.transpose() * g;
        break;
      }
      case Op::kTranspose: {
        if (grad_a) adjoint(n.a) += g.transpose();
        break;
      }
      case Op::kExp: {
        if (grad_a) adjoint(n.a) += g.cwiseProduct(n.value);
        break;
      }
      case Op::kLog: {
        if (grad_a) adjoint(n.a).array() += g.array() / av.array();
        break;
      }
      case Op::kSqrt: {
        if (grad_a) adjoint(n.a).array() += 0.5 * g.array() / n.value.array();
        break;
      }
      case Op::kSum: {
        if (grad_a) adjoint(n.a).array() += g(0, 0);
        break;
      }
      case Op::kTrace: {
        if (grad_a) adjoint(n.a).diagonal().array() += g(0, 0);
        break;
      }
      case Op::kCholesky: {
        if (grad_a) {
          // Pullback of A -> L with A read as symmetric from its lower
          // triangle. With P = Phi(L^T Lbar) and G = L^{-T} P L^{-1},
          // sensitivities fold onto the lower triangle:
          //   Abar_lower = strict_tril(G + G^T) + diag(G).
          const Eigen::MatrixXd& L = n.value;
          Eigen::MatrixXd P = phi_lower(L.transpose() * g);
          Eigen::MatrixXd Y = L.triangularView<Eigen::Lower>().transpose().solve(P);
          Eigen::MatrixXd G =
              L.triangularView<Eigen::Lower>().transpose().solve(Y.transpose()).transpose();
          Eigen::MatrixXd sym = G + G.transpose();
          Eigen::MatrixXd contrib = sym.triangularView<Eigen::StrictlyLower>();
          contrib.diagonal() = G.diagonal();
          adjoint(n.a) += contrib;
        }
        break;
      }
      case Op::kTriSolve: {
        const Eigen::MatrixXd& L = av;
        const Eigen::MatrixXd& X = n.value;
        if (!n.trans) {
          // X = L^{-1} B
          Eigen::MatrixXd gb = L.triangularView<Eigen::Lower>().transpose().solve(g);
          if (grad_b) adjoint(n.b) += gb;
          if (grad_a) {
            Eigen::MatrixXd gl = -(gb * X.transpose());
            adjoint(n.a) += gl.triangularView<Eigen::Lower>();
          }
        } else {
          // X = L^{-T} B
          Eigen::MatrixXd gb = L.triangularView<Eigen::Lower>().solve(g);
          if (grad_b) adjoint(n.b) += gb;
          if (grad_a) {
            Eigen::MatrixXd gl = -(X * gb.transpose());
            adjoint(n.a) += gl.triangularView<Eigen::Lower>();
          }
        }
        break;
      }
      case Op::kLogSigmoid: {
        if (grad_a)
          adjoint(n.a) += g.cwiseProduct(
              av.unaryExpr([](double x) { return sigmoid_stable(-x); }));
        break;
      }
      case Op::kSigmoid: {
        if (grad_a)
          adjoint(n.a).array() += g.array() * n.value.array() * (1.0 - n.value.array());
        break;
      }
      case Op::kDiag: {
        if (grad_a) adjoint(n.a).diagonal() += g.col(0);
        break;
      }
      case Op::kDiagEmbed: {
        if (grad_a) adjoint(n.a).col(0) += g.diagonal();
        break;
      }
      case Op::kClampMin: {
        if (grad_a)
          adjoint(n.a).array() +=
              g.array() * (av.array() > n.aux).cast<double>();
        break;
      }
      case Op::kScale: {
        if (grad_a) adjoint(n.a) += g * n.aux;
        break;
      }
      case Op::kLeaf:
        break;
    }
  }
  backward_done_ = true;
}

Eigen::MatrixXd Tape::grad(Var v) const {
  check_same_tape(v);
  if (!backward_done_)
    throw numeric_error("grad: backward() has not been run on this tape");
  const auto& adj = adjoints_[static_cast<std::size_t>(v.id())];
  if (adj.size() == 0) {
    const auto& val = node(v).value;
    return Eigen::MatrixXd::Zero(val.rows(), val.cols());
  }
  return adj;
}

void Tape::clear() {
  nodes_.clear();
  adjoints_.clear();
  backward_done_ = false;
}

Eigen::VectorXd collect_flat_grads(const Tape& tape, const std::vector<Var>& vars) {
  Eigen::Index total = 0;
  for (const auto& v : vars) total += v.value().size();
  Eigen::VectorXd out(total);
  Eigen::Index at = 0;
  for (const auto& v : vars) {
    Eigen::MatrixXd g = tape.grad(v);
    out.segment(at, g.size()) = Eigen::Map<const Eigen::VectorXd>(g.data(), g.size());
    at += g.size();
  }
  return out;
}

double grad_check(const ValueGradFn& f, const Eigen::VectorXd& theta, double h,
                  const std::vector<bool>* active) {
  if (!(h > 0.0)) throw numeric_error("grad_check: step h must be positive");
  GradEval base = f(theta);
  if (!std::isfinite(base.value))
    throw numeric_error("grad_check: non-finite function value at base point");
  if (base.grad.size() != theta.size())
    throw numeric_error("grad_check: gradient length does not match parameter length");

  double max_err = 0.0;
  Eigen::VectorXd probe = theta;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    if (active && !(*active)[static_cast<std::size_t>(i)]) continue;
    probe(i) = theta(i) + h;
    double fp = f(probe).value;
    probe(i) = theta(i) - h;
    double fm = f(probe).value;
    probe(i) = theta(i);
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw numeric_error("grad_check: non-finite function value at coordinate " +
                          std::to_string(i));
    double central = (fp - fm) / (2.0 * h);
    double err = std::abs(base.grad(i) - central) /
                 std::max(1.0, std::abs(base.grad(i)));
    max_err = std::max(max_err, err);
  }
  return max_err;
}

}  // namespace tdgp::diff
