#pragma once

// JSON problem files, IterationLog CSV/JSON and MessageLog JSON.
// Kept apart from the core headers so that only users of file I/O pull in
// nlohmann::json. The problem schema is documented in docs/problem_format.md.

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "aladin/decentral.hpp"
#include "aladin/driver.hpp"
#include "aladin/expr.hpp"
#include "aladin/problem.hpp"

namespace aladin::io {

using json = nlohmann::json;

/// Malformed problem description; `what()` names the offending JSON path.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline Op op_from_name(const std::string& s, const std::string& path) {
  static const Op all[] = {Op::Constant, Op::Variable, Op::Parameter, Op::Neg, Op::Exp,
                           Op::Log,      Op::Sin,      Op::Cos,       Op::Sqrt, Op::Square,
                           Op::Add,      Op::Sub,      Op::Mul,       Op::Div,  Op::Pow};
  for (Op op : all)
    if (s == op_name(op)) return op;
  throw ParseError(path + ": unknown operator '" + s + "'");
}

inline std::size_t index_at(const json& j, std::size_t limit, const char* what, const std::string& path) {
  if (!j.is_number_integer() || j.get<long long>() < 0)
    throw ParseError(path + ": " + what + " index must be a non-negative integer");
  const auto i = j.get<std::size_t>();
  if (i >= limit)
    throw ParseError(path + ": " + what + " index " + std::to_string(i) + " out of range (dimension " +
                     std::to_string(limit) + ")");
  return i;
}

inline Expr parse_expr(const json& j, std::size_t nx, std::size_t np, const std::string& path) {
  if (j.is_number()) return Expr(j.get<double>());
  if (!j.is_array() || j.empty() || !j[0].is_string())
    throw ParseError(path + ": expected a number or an array [\"op\", ...]");
  const Op op = op_from_name(j[0].get<std::string>(), path);
  auto arity = [&](std::size_t n) {
    if (j.size() != n + 1)
      throw ParseError(path + ": '" + op_name(op) + "' takes " + std::to_string(n) + " argument(s)");
  };
  switch (op) {
    case Op::Constant:
      arity(1);
      if (!j[1].is_number()) throw ParseError(path + ": const expects a number");
      return Expr(j[1].get<double>());
    case Op::Variable:
      arity(1);
      return Expr::var(index_at(j[1], nx, "variable", path));
    case Op::Parameter:
      arity(1);
      return Expr::param(index_at(j[1], np, "parameter", path));
    default:
      break;
  }
  if (is_unary(op)) {
    arity(1);
    return Expr::unary(op, parse_expr(j[1], nx, np, path + "[1]"));
  }
  arity(2);
  return Expr::binary(op, parse_expr(j[1], nx, np, path + "[1]"), parse_expr(j[2], nx, np, path + "[2]"));
}

inline double bound_value(const json& j, double inf_sign, const std::string& path) {
  if (j.is_null()) return inf_sign * kInf;
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "+inf") return kInf;
    if (s == "-inf") return -kInf;
  }
  throw ParseError(path + ": bound must be a number, null, \"inf\" or \"-inf\"");
}

inline Vector number_vector(const json& j, const std::string& path) {
  if (!j.is_array()) throw ParseError(path + ": expected an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) {
    if (!j[k].is_number()) throw ParseError(path + "[" + std::to_string(k) + "]: expected a number");
    v[static_cast<Eigen::Index>(k)] = j[k].get<double>();
  }
  return v;
}

inline Vector bound_vector(const json& j, std::size_t n, double inf_sign, const std::string& path) {
  if (!j.is_array() || j.size() != n)
    throw ParseError(path + ": expected an array of " + std::to_string(n) + " bounds");
  Vector v(static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < n; ++k)
    v[static_cast<Eigen::Index>(k)] = bound_value(j[k], inf_sign, path + "[" + std::to_string(k) + "]");
  return v;
}

inline VectorFunction function_list(const json& j, std::size_t nx, std::size_t np, const std::string& path) {
  if (!j.is_array()) throw ParseError(path + ": expected an array of expressions");
  std::vector<Expr> out;
  for (std::size_t k = 0; k < j.size(); ++k) out.push_back(parse_expr(j[k], nx, np, path + "[" + std::to_string(k) + "]"));
  return VectorFunction(std::move(out), nx, np);
}

inline json bound_json(double v) {
  if (std::isinf(v)) return v > 0 ? json("inf") : json("-inf");
  return v;
}

inline json vector_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) a.push_back(v[k]);
  return a;
}

inline json expr_json(const Expr& e) { return json::parse(e.to_string()); }

}  // namespace detail

inline Subproblem subproblem_from_json(const json& j, const std::string& path) {
  if (!j.is_object()) throw ParseError(path + ": expected an object");
  if (!j.contains("n_x") || !j["n_x"].is_number_integer() || j["n_x"].get<long long>() < 1)
    throw ParseError(path + ".n_x: required positive integer");
  const auto nx = j["n_x"].get<std::size_t>();
  std::size_t np = 0;
  if (j.contains("n_p")) {
    if (!j["n_p"].is_number_integer() || j["n_p"].get<long long>() < 0)
      throw ParseError(path + ".n_p: expected a non-negative integer");
    np = j["n_p"].get<std::size_t>();
  }
  if (!j.contains("objective")) throw ParseError(path + ".objective: required");
  Subproblem s;
  s.objective = VectorFunction({detail::parse_expr(j["objective"], nx, np, path + ".objective")}, nx, np);
  s.equalities = j.contains("equalities") ? detail::function_list(j["equalities"], nx, np, path + ".equalities")
                                          : VectorFunction::empty(nx, np);
  s.inequalities = j.contains("inequalities")
                       ? detail::function_list(j["inequalities"], nx, np, path + ".inequalities")
                       : VectorFunction::empty(nx, np);
  const auto n = static_cast<Eigen::Index>(nx);
  s.lower = j.contains("lower") ? detail::bound_vector(j["lower"], nx, -1.0, path + ".lower") : Vector::Constant(n, -kInf);
  s.upper = j.contains("upper") ? detail::bound_vector(j["upper"], nx, 1.0, path + ".upper") : Vector::Constant(n, kInf);
  s.initial = j.contains("initial") ? detail::number_vector(j["initial"], path + ".initial") : Vector::Zero(n);
  s.parameters = j.contains("parameters") ? detail::number_vector(j["parameters"], path + ".parameters")
                                          : Vector::Zero(static_cast<Eigen::Index>(np));
  if (s.initial.size() != n) throw ParseError(path + ".initial: expected " + std::to_string(nx) + " entries");
  if (s.parameters.size() != static_cast<Eigen::Index>(np))
    throw ParseError(path + ".parameters: expected " + std::to_string(np) + " entries");

  if (!j.contains("coupling")) throw ParseError(path + ".coupling: required (use [] when there are no consensus rows)");
  const json& A = j["coupling"];
  if (!A.is_array()) throw ParseError(path + ".coupling: expected an array of rows");
  s.coupling = Matrix::Zero(static_cast<Eigen::Index>(A.size()), n);
  for (std::size_t r = 0; r < A.size(); ++r) {
    const std::string rp = path + ".coupling[" + std::to_string(r) + "]";
    const Vector row = detail::number_vector(A[r], rp);
    if (row.size() != n) throw ParseError(rp + ": expected " + std::to_string(nx) + " entries");
    s.coupling.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return s;
}

/// Parses and validates a problem description.
inline SeparableProblem problem_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("problem: expected a JSON object");
  if (!j.contains("subproblems") || !j["subproblems"].is_array() || j["subproblems"].empty())
    throw ParseError("subproblems: required non-empty array");
  SeparableProblem p;
  for (std::size_t i = 0; i < j["subproblems"].size(); ++i)
    p.subproblems.push_back(subproblem_from_json(j["subproblems"][i], "subproblems[" + std::to_string(i) + "]"));
  if (j.contains("rhs")) p.rhs = detail::number_vector(j["rhs"], "rhs");
  auto v = validate(p);
  if (!v.empty()) {
    std::string msg = "invalid problem:";
    for (const auto& s : v) msg += "\n  " + s;
    throw ParseError(msg);
  }
  return p;
}

inline SeparableProblem problem_from_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("JSON syntax error: ") + e.what());
  }
  return problem_from_json(j);
}

inline SeparableProblem load_problem(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return problem_from_string(ss.str());
}

inline json problem_to_json(const SeparableProblem& p) {
  json j;
  j["rhs"] = detail::vector_json(p.b());
  j["subproblems"] = json::array();
  for (const auto& s : p.subproblems) {
    json o;
    o["n_x"] = s.n_x();
    o["n_p"] = s.n_p();
    o["objective"] = detail::expr_json(s.objective.outputs().front());
    o["equalities"] = json::array();
    for (const auto& e : s.equalities.outputs()) o["equalities"].push_back(detail::expr_json(e));
    o["inequalities"] = json::array();
    for (const auto& e : s.inequalities.outputs()) o["inequalities"].push_back(detail::expr_json(e));
    o["lower"] = json::array();
    o["upper"] = json::array();
    for (Eigen::Index k = 0; k < s.lower.size(); ++k) {
      o["lower"].push_back(detail::bound_json(s.lower[k]));
      o["upper"].push_back(detail::bound_json(s.upper[k]));
    }
    o["coupling"] = json::array();
    for (Eigen::Index r = 0; r < s.coupling.rows(); ++r) o["coupling"].push_back(detail::vector_json(s.coupling.row(r).transpose()));
    o["parameters"] = detail::vector_json(s.parameters);
    o["initial"] = detail::vector_json(s.initial);
    j["subproblems"].push_back(std::move(o));
  }
  return j;
}

// ---------------------------------------------------------------- logs

inline constexpr const char* kLogHeader = "iter,consensus_viol,local_step,qp_step,active_changes,comms_floats";

inline void write_log_csv(std::ostream& os, const IterationLog& log) {
  os << kLogHeader << "\n";
  const auto old = os.precision(17);
  for (const auto& r : log.records)
    os << r.iter << "," << r.consensus_viol << "," << r.local_step << "," << r.qp_step << "," << r.active_changes
       << "," << r.comms_floats << "\n";
  os.precision(old);
}

inline json timings_json(const PhaseTimings& t) {
  return {{"local", t.local}, {"sensitivity", t.sensitivity}, {"regularization", t.regularization},
          {"qp", t.qp},       {"inner", t.inner}};
}

inline json log_to_json(const IterationLog& log) {
  json a = json::array();
  for (const auto& r : log.records) {
    json o = {{"iter", r.iter},
              {"consensus_viol", r.consensus_viol},
              {"local_step", r.local_step},
              {"qp_step", r.qp_step},
              {"active_changes", r.active_changes},
              {"comms_floats", r.comms_floats},
              {"inner_iterations", r.inner_iterations},
              {"time", timings_json(r.time)}};
    o["inner_residual"] = std::isnan(r.inner_residual) ? json(nullptr) : json(r.inner_residual);
    a.push_back(std::move(o));
  }
  return a;
}

inline json messages_to_json(const MessageLog& m) {
  auto edges = [](const std::map<std::pair<std::size_t, std::size_t>, std::uint64_t>& e) {
    json a = json::array();
    for (const auto& [k, v] : e) a.push_back({{"from", k.first}, {"to", k.second}, {"floats", v}});
    return a;
  };
  json res = json::array();
  for (double r : m.residuals) res.push_back(r);
  return {{"edges", edges(m.edge_floats)},
          {"setup_edges", edges(m.setup_edge_floats)},
          {"global_sum_rounds", m.global_sum_rounds},
          {"global_scalars", m.global_scalars},
          {"setup_global_scalars", m.setup_global_scalars},
          {"inner_iterations", m.inner_iterations},
          {"total_floats", m.total_floats()},
          {"inner_residuals", res}};
}

inline json solution_to_json(const Solution& s) {
  json x = json::array();
  for (const auto& xi : s.x) x.push_back(detail::vector_json(xi));
  return {{"termination", to_string(s.reason)},
          {"message", s.message},
          {"iterations", s.iterations},
          {"consensus_violation", s.consensus_violation},
          {"local_step", s.local_step},
          {"local_kkt", s.local_kkt},
          {"x", x},
          {"lambda", detail::vector_json(s.lambda)},
          {"time", timings_json(s.time)},
          {"setup_time", s.setup_time},
          {"total_time", s.total_time},
          {"log", log_to_json(s.log)},
          {"messages", messages_to_json(s.messages)}};
}

/// Plain-text summary: termination, violations, timings.
inline void write_report(std::ostream& os, const Solution& s, const std::string& title = "") {
  auto sci = [](double v) {
    std::ostringstream o;
    o << std::scientific << std::setprecision(4) << v;
    return o.str();
  };
  auto sec = [](double v) {
    std::ostringstream o;
    o << std::fixed << std::setprecision(4) << v << " s";
    return o.str();
  };
  os << "========================================================\n";
  if (!title.empty()) os << "  " << title << "\n";
  os << "  termination:          " << to_string(s.reason);
  if (!s.message.empty()) os << " (" << s.message << ")";
  os << "\n";
  os << "  iterations:           " << s.iterations << "\n";
  os << "  consensus violation:  " << sci(s.consensus_violation) << "\n";
  os << "  local step:           " << sci(s.local_step) << "\n";
  os << "  local KKT error:      " << sci(s.local_kkt) << "\n";
  if (s.messages.total_floats() > 0) os << "  floats communicated:  " << s.messages.total_floats() << "\n";
  os << "  ---- timing -------------------------------------------\n";
  os << "  setup                 " << sec(s.setup_time) << "\n";
  os << "  local NLPs            " << sec(s.time.local) << "\n";
  os << "  sensitivities         " << sec(s.time.sensitivity) << "\n";
  os << "  regularization        " << sec(s.time.regularization) << "\n";
  os << "  coordination QP       " << sec(s.time.qp) << "\n";
  if (s.time.inner > 0) os << "  inner solver          " << sec(s.time.inner) << "\n";
  os << "  total                 " << sec(s.total_time) << "\n";
  os << "========================================================\n";
}

}  // namespace aladin::io
