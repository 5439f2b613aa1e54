#pragma once

// Expression graphs for subproblem objectives and constraints.
//
// An Expr is an immutable DAG node. A VectorFunction compiles a list of
// output expressions into a flat tape once; evaluation, reverse-mode
// gradients and forward-over-reverse Hessians all run over that tape with
// call-local scratch, so a VectorFunction can be shared between threads.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace aladin {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Op : std::uint8_t {
  Constant,
  Variable,
  Parameter,
  Neg,
  Exp,
  Log,
  Sin,
  Cos,
  Sqrt,
  Square,
  Add,
  Sub,
  Mul,
  Div,
  Pow,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::Constant: return "const";
    case Op::Variable: return "var";
    case Op::Parameter: return "param";
    case Op::Neg: return "neg";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Sin: return "sin";
    case Op::Cos: return "cos";
    case Op::Sqrt: return "sqrt";
    case Op::Square: return "square";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::Pow: return "pow";
  }
  return "?";
}

inline bool is_unary(Op op) { return op >= Op::Neg && op <= Op::Square; }
inline bool is_binary(Op op) { return op >= Op::Add; }

struct ExprNode {
  Op op = Op::Constant;
  double value = 0.0;       // Constant
  std::size_t index = 0;    // Variable / Parameter
  std::shared_ptr<const ExprNode> lhs;
  std::shared_ptr<const ExprNode> rhs;
};

class Expr {
 public:
  Expr() : Expr(0.0) {}
  Expr(double c) {  // NOLINT(google-explicit-constructor)
    auto n = std::make_shared<ExprNode>();
    n->op = Op::Constant;
    n->value = c;
    node_ = std::move(n);
  }
  explicit Expr(std::shared_ptr<const ExprNode> node) : node_(std::move(node)) {}

  static Expr var(std::size_t i) { return leaf(Op::Variable, i); }
  static Expr param(std::size_t i) { return leaf(Op::Parameter, i); }

  static Expr unary(Op op, const Expr& a) {
    if (!is_unary(op)) throw std::invalid_argument("Expr::unary: not a unary op");
    auto n = std::make_shared<ExprNode>();
    n->op = op;
    n->lhs = a.node_;
    return Expr(std::move(n));
  }
  static Expr binary(Op op, const Expr& a, const Expr& b) {
    if (!is_binary(op)) throw std::invalid_argument("Expr::binary: not a binary op");
    auto n = std::make_shared<ExprNode>();
    n->op = op;
    n->lhs = a.node_;
    n->rhs = b.node_;
    return Expr(std::move(n));
  }

  const ExprNode* node() const { return node_.get(); }
  const std::shared_ptr<const ExprNode>& shared() const { return node_; }
  Op op() const { return node_->op; }

  /// Prefix s-expression, e.g. ["mul",["var",0],["var",1]].
  std::string to_string() const {
    std::ostringstream os;
    write(os, node_.get());
    return os.str();
  }

 private:
  static Expr leaf(Op op, std::size_t i) {
    auto n = std::make_shared<ExprNode>();
    n->op = op;
    n->index = i;
    return Expr(std::move(n));
  }

  static void write(std::ostringstream& os, const ExprNode* n) {
    switch (n->op) {
      case Op::Constant: {
        std::ostringstream v;
        v.precision(17);
        v << n->value;
        os << "[\"const\"," << v.str() << "]";
        return;
      }
      case Op::Variable:
      case Op::Parameter:
        os << "[\"" << op_name(n->op) << "\"," << n->index << "]";
        return;
      default:
        os << "[\"" << op_name(n->op) << "\",";
        write(os, n->lhs.get());
        if (n->rhs) {
          os << ",";
          write(os, n->rhs.get());
        }
        os << "]";
    }
  }

  std::shared_ptr<const ExprNode> node_;
};

inline Expr operator+(const Expr& a, const Expr& b) { return Expr::binary(Op::Add, a, b); }
inline Expr operator-(const Expr& a, const Expr& b) { return Expr::binary(Op::Sub, a, b); }
inline Expr operator*(const Expr& a, const Expr& b) { return Expr::binary(Op::Mul, a, b); }
inline Expr operator/(const Expr& a, const Expr& b) { return Expr::binary(Op::Div, a, b); }
inline Expr operator-(const Expr& a) { return Expr::unary(Op::Neg, a); }
inline Expr& operator+=(Expr& a, const Expr& b) { return a = a + b; }
inline Expr& operator-=(Expr& a, const Expr& b) { return a = a - b; }
inline Expr& operator*=(Expr& a, const Expr& b) { return a = a * b; }
inline Expr exp(const Expr& a) { return Expr::unary(Op::Exp, a); }
inline Expr log(const Expr& a) { return Expr::unary(Op::Log, a); }
inline Expr sin(const Expr& a) { return Expr::unary(Op::Sin, a); }
inline Expr cos(const Expr& a) { return Expr::unary(Op::Cos, a); }
inline Expr sqrt(const Expr& a) { return Expr::unary(Op::Sqrt, a); }
inline Expr square(const Expr& a) { return Expr::unary(Op::Square, a); }
inline Expr pow(const Expr& a, const Expr& b) { return Expr::binary(Op::Pow, a, b); }

/// Rebuilds `e` with every variable index i replaced by map[i] (and every
/// parameter index j by pmap[j] when pmap is non-empty). Shared subgraphs
/// stay shared in the result.
inline Expr remap_variables(const Expr& e, const std::vector<std::size_t>& map,
                            const std::vector<std::size_t>& pmap = {}) {
  std::unordered_map<const ExprNode*, std::shared_ptr<const ExprNode>> done;
  // explicit post-order stack; graphs from long sums can be deep
  std::vector<std::pair<const ExprNode*, bool>> stack{{e.node(), false}};
  while (!stack.empty()) {
    auto [n, expanded] = stack.back();
    stack.pop_back();
    if (done.count(n)) continue;
    if (!expanded && (n->lhs || n->rhs)) {
      stack.push_back({n, true});
      if (n->rhs) stack.push_back({n->rhs.get(), false});
      stack.push_back({n->lhs.get(), false});
      continue;
    }
    auto copy = std::make_shared<ExprNode>(*n);
    if (n->op == Op::Variable) {
      if (n->index >= map.size()) throw std::out_of_range("remap_variables: index outside map");
      copy->index = map[n->index];
    }
    if (n->op == Op::Parameter && !pmap.empty()) {
      if (n->index >= pmap.size()) throw std::out_of_range("remap_variables: parameter index outside map");
      copy->index = pmap[n->index];
    }
    if (n->lhs) copy->lhs = done.at(n->lhs.get());
    if (n->rhs) copy->rhs = done.at(n->rhs.get());
    done.emplace(n, std::move(copy));
  }
  return Expr(done.at(e.node()));
}

/// Collects the distinct variable indices referenced by `e`, ascending.
inline std::vector<std::size_t> referenced_variables(const Expr& e) {
  std::vector<std::size_t> out;
  std::unordered_map<const ExprNode*, bool> seen;
  std::vector<const ExprNode*> stack{e.node()};
  while (!stack.empty()) {
    const ExprNode* n = stack.back();
    stack.pop_back();
    if (!seen.emplace(n, true).second) continue;
    if (n->op == Op::Variable) out.push_back(n->index);
    if (n->lhs) stack.push_back(n->lhs.get());
    if (n->rhs) stack.push_back(n->rhs.get());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

/// Raised for log/sqrt of a negative argument, division by zero and other
/// non-finite results. what() names the offending node.
class DomainError : public std::domain_error {
 public:
  DomainError(const std::string& reason, const std::string& node)
      : std::domain_error(reason + " at node " + node), node_(node) {}
  const std::string& node() const { return node_; }

 private:
  std::string node_;
};

namespace detail {

struct TapeEntry {
  Op op;
  std::uint32_t a = 0;
  std::uint32_t b = 0;
  std::size_t index = 0;
  double value = 0.0;
  bool depends_on_x = false;
  const ExprNode* origin = nullptr;
};

struct Tape {
  std::vector<TapeEntry> entries;
  std::vector<std::uint32_t> outputs;
  std::vector<std::shared_ptr<const ExprNode>> roots;  // keeps origins alive
};

inline std::string describe(const ExprNode* n) {
  std::string s = Expr(std::shared_ptr<const ExprNode>(std::shared_ptr<const ExprNode>{}, n)).to_string();
  if (s.size() > 200) s = s.substr(0, 197) + "...";
  return s;
}

[[noreturn]] inline void domain_fail(const std::string& why, const TapeEntry& e) {
  throw DomainError(why, describe(e.origin));
}

inline Tape compile(const std::vector<Expr>& outputs) {
  Tape tape;
  std::unordered_map<const ExprNode*, std::uint32_t> slot;
  for (const Expr& root : outputs) {
    tape.roots.push_back(root.shared());
    std::vector<std::pair<const ExprNode*, bool>> stack{{root.node(), false}};
    while (!stack.empty()) {
      auto [n, expanded] = stack.back();
      stack.pop_back();
      if (slot.count(n)) continue;
      if (!expanded && (n->lhs || n->rhs)) {
        stack.push_back({n, true});
        if (n->rhs) stack.push_back({n->rhs.get(), false});
        stack.push_back({n->lhs.get(), false});
        continue;
      }
      TapeEntry e;
      e.op = n->op;
      e.index = n->index;
      e.value = n->value;
      e.origin = n;
      if (n->op == Op::Variable) e.depends_on_x = true;
      if (n->lhs) {
        e.a = slot.at(n->lhs.get());
        e.depends_on_x = e.depends_on_x || tape.entries[e.a].depends_on_x;
      }
      if (n->rhs) {
        e.b = slot.at(n->rhs.get());
        e.depends_on_x = e.depends_on_x || tape.entries[e.b].depends_on_x;
      }
      slot.emplace(n, static_cast<std::uint32_t>(tape.entries.size()));
      tape.entries.push_back(e);
    }
    tape.outputs.push_back(slot.at(root.node()));
  }
  return tape;
}

// First and second partials of one tape entry at the current values.
struct Partials {
  double da = 0, db = 0;
  double daa = 0, dab = 0, dbb = 0;
};

inline Partials partials(const TapeEntry& e, const std::vector<double>& v, const TapeEntry& rhs_entry,
                         bool second) {
  Partials p;
  const double a = v[e.a];
  switch (e.op) {
    case Op::Neg: p.da = -1; break;
    case Op::Exp: p.da = p.daa = std::exp(a); break;
    case Op::Log: p.da = 1.0 / a; p.daa = -1.0 / (a * a); break;
    case Op::Sin: p.da = std::cos(a); p.daa = -std::sin(a); break;
    case Op::Cos: p.da = -std::sin(a); p.daa = -std::cos(a); break;
    case Op::Sqrt: {
      if (a <= 0.0) domain_fail("derivative of sqrt at non-positive argument", e);
      const double r = std::sqrt(a);
      p.da = 0.5 / r;
      p.daa = -0.25 / (a * r);
      break;
    }
    case Op::Square: p.da = 2 * a; p.daa = 2; break;
    case Op::Add: p.da = 1; p.db = 1; break;
    case Op::Sub: p.da = 1; p.db = -1; break;
    case Op::Mul: p.da = v[e.b]; p.db = a; p.dab = 1; break;
    case Op::Div: {
      const double b = v[e.b];
      p.da = 1.0 / b;
      p.db = -a / (b * b);
      p.dab = -1.0 / (b * b);
      p.dbb = 2.0 * a / (b * b * b);
      break;
    }
    case Op::Pow: {
      const double b = v[e.b];
      p.da = b * std::pow(a, b - 1);
      if (second) p.daa = b * (b - 1) * std::pow(a, b - 2);
      if (rhs_entry.depends_on_x) {
        if (a <= 0.0) domain_fail("derivative of pow in the exponent needs a positive base", e);
        const double y = std::pow(a, b);
        const double la = std::log(a);
        p.db = y * la;
        p.dbb = y * la * la;
        p.dab = std::pow(a, b - 1) * (1 + b * la);
      }
      break;
    }
    default: break;
  }
  if (!std::isfinite(p.da) || !std::isfinite(p.db) ||
      (second && (!std::isfinite(p.daa) || !std::isfinite(p.dab) || !std::isfinite(p.dbb)))) {
    domain_fail("non-finite derivative", e);
  }
  return p;
}

}  // namespace detail

/// A vector-valued function R^{n_x} x R^{n_p} -> R^{n_out} built from
/// expressions. Immutable after construction.
class VectorFunction {
 public:
  /// Zero outputs, zero inputs.
  VectorFunction() : tape_(std::make_shared<detail::Tape>()) {}

  VectorFunction(std::vector<Expr> outputs, std::size_t n_x, std::size_t n_p)
      : n_x_(n_x), n_p_(n_p) {
    tape_ = std::make_shared<detail::Tape>(detail::compile(outputs));
    for (const auto& e : tape_->entries) {
      if (e.op == Op::Variable && e.index >= n_x)
        throw std::invalid_argument("VectorFunction: variable index " + std::to_string(e.index) +
                                    " >= n_x = " + std::to_string(n_x));
      if (e.op == Op::Parameter && e.index >= n_p)
        throw std::invalid_argument("VectorFunction: parameter index " + std::to_string(e.index) +
                                    " >= n_p = " + std::to_string(n_p));
    }
    outputs_ = std::move(outputs);
  }

  /// Zero-output function with the given input dimensions.
  static VectorFunction empty(std::size_t n_x, std::size_t n_p = 0) { return VectorFunction({}, n_x, n_p); }

  std::size_t n_x() const { return n_x_; }
  std::size_t n_p() const { return n_p_; }
  std::size_t n_out() const { return tape_->outputs.size(); }
  const std::vector<Expr>& outputs() const { return outputs_; }

  /// Identity of the compiled graph; unchanged by copies.
  const void* id() const { return tape_.get(); }

  Vector evaluate(const Vector& x, const Vector& p) const {
    std::vector<double> v;
    forward(x, p, v);
    Vector out(n_out());
    for (std::size_t o = 0; o < n_out(); ++o) out[o] = v[tape_->outputs[o]];
    return out;
  }

  /// Exact gradient of a scalar function.
  Vector gradient(const Vector& x, const Vector& p) const {
    if (n_out() != 1) throw std::invalid_argument("gradient: function must have exactly one output");
    return jacobian(x, p).row(0).transpose();
  }

  /// Exact Jacobian, one row per output (0 x n_x for an empty function).
  Matrix jacobian(const Vector& x, const Vector& p) const {
    std::vector<double> v;
    forward(x, p, v);
    Matrix J = Matrix::Zero(n_out(), n_x_);
    std::vector<double> adj(v.size());
    const auto& ent = tape_->entries;
    for (std::size_t o = 0; o < n_out(); ++o) {
      std::fill(adj.begin(), adj.end(), 0.0);
      adj[tape_->outputs[o]] = 1.0;
      for (std::size_t k = ent.size(); k-- > 0;) {
        const auto& e = ent[k];
        if (adj[k] == 0.0 || !e.depends_on_x) continue;
        if (e.op == Op::Variable) {
          J(o, e.index) += adj[k];
          continue;
        }
        if (!is_unary(e.op) && !is_binary(e.op)) continue;
        const auto p2 = detail::partials(e, v, is_binary(e.op) ? ent[e.b] : e, false);
        adj[e.a] += adj[k] * p2.da;
        if (is_binary(e.op)) adj[e.b] += adj[k] * p2.db;
      }
    }
    return J;
  }

  /// Exact Hessian of sum_o weights[o] * out_o, symmetrized.
  Matrix weighted_hessian(const Vector& x, const Vector& p, const Vector& weights) const {
    if (static_cast<std::size_t>(weights.size()) != n_out())
      throw std::invalid_argument("weighted_hessian: weight count does not match outputs");
    Matrix H = Matrix::Zero(n_x_, n_x_);
    if (n_out() == 0 || n_x_ == 0) return H;
    std::vector<double> v;
    forward(x, p, v);
    const auto& ent = tape_->entries;
    const std::size_t m = ent.size();

    std::vector<detail::Partials> part(m);
    for (std::size_t k = 0; k < m; ++k) {
      const auto& e = ent[k];
      if (e.depends_on_x && (is_unary(e.op) || is_binary(e.op)))
        part[k] = detail::partials(e, v, is_binary(e.op) ? ent[e.b] : e, true);
    }
    // the adjoint sweep does not depend on the direction
    std::vector<double> adj(m, 0.0);
    for (std::size_t o = 0; o < n_out(); ++o) adj[tape_->outputs[o]] += weights[o];
    for (std::size_t k = m; k-- > 0;) {
      const auto& e = ent[k];
      if (adj[k] == 0.0 || !e.depends_on_x) continue;
      if (is_unary(e.op) || is_binary(e.op)) {
        adj[e.a] += adj[k] * part[k].da;
        if (is_binary(e.op)) adj[e.b] += adj[k] * part[k].db;
      }
    }

    std::vector<double> dv(m), dadj(m);
    for (std::size_t j = 0; j < n_x_; ++j) {
      for (std::size_t k = 0; k < m; ++k) {
        const auto& e = ent[k];
        const auto& pk = part[k];
        switch (e.op) {
          case Op::Variable: dv[k] = (e.index == j) ? 1.0 : 0.0; break;
          case Op::Constant:
          case Op::Parameter: dv[k] = 0.0; break;
          default:
            if (!e.depends_on_x) {
              dv[k] = 0.0;
            } else if (is_unary(e.op)) {
              dv[k] = pk.da * dv[e.a];
            } else {
              dv[k] = pk.da * dv[e.a] + pk.db * dv[e.b];
            }
        }
      }
      std::fill(dadj.begin(), dadj.end(), 0.0);
      for (std::size_t k = m; k-- > 0;) {
        const auto& e = ent[k];
        if (!e.depends_on_x) continue;
        if (e.op == Op::Variable) {
          H(e.index, j) += dadj[k];
          continue;
        }
        const auto& pk = part[k];
        if (is_unary(e.op)) {
          dadj[e.a] += dadj[k] * pk.da + adj[k] * pk.daa * dv[e.a];
        } else if (is_binary(e.op)) {
          dadj[e.a] += dadj[k] * pk.da + adj[k] * (pk.daa * dv[e.a] + pk.dab * dv[e.b]);
          dadj[e.b] += dadj[k] * pk.db + adj[k] * (pk.dab * dv[e.a] + pk.dbb * dv[e.b]);
        }
      }
    }
    return 0.5 * (H + H.transpose());
  }

 private:
  void forward(const Vector& x, const Vector& p, std::vector<double>& v) const {
    if (static_cast<std::size_t>(x.size()) != n_x_)
      throw std::invalid_argument("evaluate: x has " + std::to_string(x.size()) + " entries, expected " +
                                  std::to_string(n_x_));
    if (static_cast<std::size_t>(p.size()) != n_p_)
      throw std::invalid_argument("evaluate: p has " + std::to_string(p.size()) + " entries, expected " +
                                  std::to_string(n_p_));
    const auto& ent = tape_->entries;
    v.resize(ent.size());
    for (std::size_t k = 0; k < ent.size(); ++k) {
      const auto& e = ent[k];
      const double a = (e.op >= Op::Neg) ? v[e.a] : 0.0;
      double r = 0.0;
      switch (e.op) {
        case Op::Constant: r = e.value; break;
        case Op::Variable: r = x[static_cast<Eigen::Index>(e.index)]; break;
        case Op::Parameter: r = p[static_cast<Eigen::Index>(e.index)]; break;
        case Op::Neg: r = -a; break;
        case Op::Exp: r = std::exp(a); break;
        case Op::Log:
          if (a <= 0.0) detail::domain_fail("log of non-positive argument", e);
          r = std::log(a);
          break;
        case Op::Sin: r = std::sin(a); break;
        case Op::Cos: r = std::cos(a); break;
        case Op::Sqrt:
          if (a < 0.0) detail::domain_fail("sqrt of negative argument", e);
          r = std::sqrt(a);
          break;
        case Op::Square: r = a * a; break;
        case Op::Add: r = a + v[e.b]; break;
        case Op::Sub: r = a - v[e.b]; break;
        case Op::Mul: r = a * v[e.b]; break;
        case Op::Div:
          if (v[e.b] == 0.0) detail::domain_fail("division by zero", e);
          r = a / v[e.b];
          break;
        case Op::Pow: {
          const double b = v[e.b];
          if (a < 0.0 && b != std::floor(b)) detail::domain_fail("pow of negative base to non-integer power", e);
          if (a == 0.0 && b < 0.0) detail::domain_fail("division by zero in pow", e);
          r = std::pow(a, b);
          break;
        }
      }
      if (!std::isfinite(r)) detail::domain_fail("non-finite value", e);
      v[k] = r;
    }
  }

  std::size_t n_x_ = 0;
  std::size_t n_p_ = 0;
  std::shared_ptr<const detail::Tape> tape_;
  std::vector<Expr> outputs_;
};

inline Vector evaluate(const VectorFunction& fun, const Vector& x, const Vector& p) {
  return fun.evaluate(x, p);
}
inline Vector gradient(const VectorFunction& fun, const Vector& x, const Vector& p) {
  return fun.gradient(x, p);
}
inline Matrix jacobian(const VectorFunction& fun, const Vector& x, const Vector& p) {
  return fun.jacobian(x, p);
}

/// Hessian of f + kappa' g + mult' h_active. Box terms are affine and do not
/// contribute.
inline Matrix lagrangian_hessian(const VectorFunction& f, const VectorFunction& g, const VectorFunction& h_active,
                                 const Vector& x, const Vector& p, const Vector& kappa, const Vector& mult_active) {
  if (f.n_out() != 1) throw std::invalid_argument("lagrangian_hessian: objective must be scalar");
  if (static_cast<std::size_t>(kappa.size()) != g.n_out())
    throw std::invalid_argument("lagrangian_hessian: kappa length does not match g");
  if (static_cast<std::size_t>(mult_active.size()) != h_active.n_out())
    throw std::invalid_argument("lagrangian_hessian: multiplier length does not match h");
  Matrix H = f.weighted_hessian(x, p, Vector::Ones(1));
  if (g.n_out() > 0) H += g.weighted_hessian(x, p, kappa);
  if (h_active.n_out() > 0) H += h_active.weighted_hessian(x, p, mult_active);
  return 0.5 * (H + H.transpose());
}

}  // namespace aladin
