#pragma once

// Command-line front end. `run_cli` is the whole program minus main() so the
// tests can drive it in-process.
//
// exit codes: 0 ok, 1 malformed input, 2 solver error,
//             3 not converged within --max-iter (only with --strict)

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "aladin/aladin.hpp"
#include "aladin/io.hpp"

namespace aladin::cli {

enum ExitCode : int { kOk = 0, kBadInput = 1, kSolverError = 2, kNotConverged = 3 };

enum class Algorithm { aladin, admm };

struct Request {
  SolverOptions opts;
  Algorithm algorithm = Algorithm::aladin;
  std::string problem_path;
  std::string example;
  std::uint64_t seed = 42;
  int blocks = 4;
  int horizon = 5;
  std::string log_csv;
  std::string log_json;
  std::string messages_json;
  std::string solution_json;
  bool strict = false;
  bool quiet = false;
};

namespace detail {

inline const char* to_string(Algorithm a) { return a == Algorithm::aladin ? "aladin" : "admm"; }

// enum-valued flag given by name, e.g. --hess dbfgs
template <class E>
void choice(CLI::App& app, const std::string& flag, E& target, std::initializer_list<E> values, const std::string& help) {
  std::vector<std::string> names;
  std::string text;
  for (E v : values) {
    names.emplace_back(to_string(v));
    text += (text.empty() ? "" : "|") + names.back();
  }
  std::vector<E> vals(values);
  app.add_option_function<std::string>(
         flag,
         [&target, names, vals](const std::string& s) {
           for (std::size_t k = 0; k < names.size(); ++k)
             if (names[k] == s) target = vals[k];
         },
         help + " (" + text + ", default " + to_string(target) + ")")
      ->check(CLI::IsMember(names))
      ->type_name(text);
}

inline void add_solver_flags(CLI::App& app, Request& r) {
  SolverOptions& o = r.opts;
  app.add_option("--max-iter", o.max_iter, "outer iteration limit")->capture_default_str();
  app.add_option("--term-eps", o.term_eps, "termination tolerance, 0 disables the check")->capture_default_str();
  app.add_option("--step-size", o.step_size, "step size alpha in (0,1]")->capture_default_str();
  app.add_option("--rho0", o.rho0, "initial Sigma scale")->capture_default_str();
  app.add_option("--mu0", o.mu0, "initial slack penalty")->capture_default_str();
  app.add_option("--r-sigma", o.r_sigma, "Sigma growth factor")->capture_default_str();
  app.add_option("--r-delta", o.r_delta, "Delta growth factor")->capture_default_str();
  app.add_option("--sigma-max", o.sigma_max, "Sigma cap")->capture_default_str();
  app.add_option("--delta-max", o.delta_max, "Delta cap")->capture_default_str();
  app.add_option("--act-margin", o.act_margin, "activity margin tau")->capture_default_str();
  choice(app, "--hess", o.hessian, {HessianMode::exact, HessianMode::bfgs, HessianMode::dbfgs},
         "Hessian model");
  app.add_flag("--reg,!--no-reg", o.reg, "regularize exact Hessians (default on)");
  app.add_option("--reg-param", o.reg_param, "eigenvalue floor delta")->capture_default_str();
  choice(app, "--variant", o.variant, {Variant::fullspace, Variant::nullspace, Variant::bilevel},
         "coordination variant");
  choice(app, "--inner-alg", o.inner_alg, {InnerAlgorithm::dcg, InnerAlgorithm::dadmm}, "inner solver (bilevel)");
  app.add_option("--inner-iter", o.inner_iter, "inner iterations per outer iteration")->capture_default_str();
  app.add_option("--rho-adm", o.rho_adm, "ADMM penalty (baseline and D-ADMM)")->capture_default_str();
  app.add_flag("--warm-start,!--no-warm-start", o.warm_start, "warm-start the inner solver (default on)");
  app.add_flag("--del-up", o.del_up, "rowwise Delta update from the consensus violation");
  app.add_option("--beta", o.beta, "Delta growth for --del-up")->capture_default_str();
  app.add_option("--gamma", o.gamma, "violation decrease ratio for --del-up")->capture_default_str();
  app.add_flag("--parallel", o.parallel, "solve local problems on worker threads");
  app.add_option("--log-every", o.log_every, "print a progress line every N iterations, 0 = off")
      ->capture_default_str();
  choice(app, "--algorithm", r.algorithm, {Algorithm::aladin, Algorithm::admm}, "outer algorithm");

  app.add_option("--log", r.log_csv, "write the iteration log as CSV");
  app.add_option("--log-json", r.log_json, "write the iteration log as JSON");
  app.add_option("--messages-json", r.messages_json, "write the inner-solver message log as JSON");
  app.add_option("--solution-json", r.solution_json, "write the full solution as JSON");
  app.add_flag("--strict", r.strict, "exit 3 when the tolerance is not met");
  app.add_flag("-q,--quiet", r.quiet, "suppress the report");
}

inline bool write_file(const std::string& path, const std::string& text, std::ostream& err) {
  std::ofstream f(path);
  if (!f) {
    err << "error: cannot write '" << path << "'\n";
    return false;
  }
  f << text;
  return static_cast<bool>(f);
}

}  // namespace detail

inline int run_request(const Request& r, bool eps_given, std::ostream& out, std::ostream& err) {
  SeparableProblem problem;
  SolverOptions opts = r.opts;
  std::string title;
  try {
    if (!r.problem_path.empty()) {
      problem = io::load_problem(r.problem_path);
      title = r.problem_path;
    } else {
      if (r.example == "coupled-qp") {
        examples::CoupledQpConfig cfg;
        cfg.seed = r.seed;
        cfg.blocks = r.blocks;
        problem = examples::coupled_qp(cfg);
      } else if (r.example == "ocp-chain") {
        examples::OcpChainConfig cfg;
        cfg.horizon = r.horizon;
        problem = examples::ocp_chain(cfg);
      } else {
        problem = examples::by_name(r.example);
      }
      // the tutorial is meant to be solved to high accuracy
      if (r.example == "tutorial" && !eps_given) opts.term_eps = 1e-10;
      title = "example " + r.example;
    }
    opts.validate();
    require_valid(problem);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kBadInput;
  }

  RunSetup setup;
  if (opts.log_every > 0 && !r.quiet) {
    setup.observer = [&out, every = opts.log_every](const IterateState&, const IterationRecord& rec) {
      if (rec.iter % every != 0) return;
      char line[160];
      std::snprintf(line, sizeof line, "iter %4d  viol %.3e  step %.3e  qp %.3e  act %zu\n", rec.iter,
                    rec.consensus_viol, rec.local_step, rec.qp_step, rec.active_changes);
      out << line;
    };
  }

  Solution sol;
  try {
    sol = r.algorithm == Algorithm::admm ? run_admm(problem, opts, setup) : run_aladin(problem, opts, setup);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kSolverError;
  }

  if (!r.quiet) io::write_report(out, sol, title + " (" + detail::to_string(r.algorithm) + ")");

  bool files_ok = true;
  if (!r.log_csv.empty()) {
    std::ostringstream os;
    io::write_log_csv(os, sol.log);
    files_ok &= detail::write_file(r.log_csv, os.str(), err);
  }
  if (!r.log_json.empty()) files_ok &= detail::write_file(r.log_json, io::log_to_json(sol.log).dump(2) + "\n", err);
  if (!r.messages_json.empty())
    files_ok &= detail::write_file(r.messages_json, io::messages_to_json(sol.messages).dump(2) + "\n", err);
  if (!r.solution_json.empty())
    files_ok &= detail::write_file(r.solution_json, io::solution_to_json(sol).dump(2) + "\n", err);
  if (!files_ok) return kBadInput;

  if (sol.reason == Termination::error) {
    err << "error: " << sol.message << "\n";
    return kSolverError;
  }
  if (r.strict && sol.reason != Termination::tolerance_met) return kNotConverged;
  return kOk;
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Distributed optimization with ALADIN and consensus ADMM"};
  app.require_subcommand(1);

  Request solve_req, example_req;
  auto* solve = app.add_subcommand("solve", "solve a problem given as JSON");
  solve->add_option("problem", solve_req.problem_path, "problem file")->required();
  detail::add_solver_flags(*solve, solve_req);

  auto* example = app.add_subcommand("example", "run a bundled instance");
  example->add_option("name", example_req.example, "tutorial | coupled-qp | ocp-chain")
      ->required()
      ->check(CLI::IsMember(examples::names()));
  example->add_option("--seed", example_req.seed, "coupled-qp: random seed")->capture_default_str();
  example->add_option("--blocks", example_req.blocks, "coupled-qp: number of blocks")->capture_default_str();
  example->add_option("--horizon", example_req.horizon, "ocp-chain: horizon length")->capture_default_str();
  detail::add_solver_flags(*example, example_req);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    // subcommand help lands here too
    if (e.get_exit_code() == 0) {
      out << (solve->parsed() ? solve->help() : example->parsed() ? example->help() : app.help());
      return kOk;
    }
    err << "error: " << e.what() << "\n";
    return kBadInput;
  }

  if (solve->parsed()) return run_request(solve_req, solve->count("--term-eps") > 0, out, err);
  return run_request(example_req, example->count("--term-eps") > 0, out, err);
}

}  // namespace aladin::cli
