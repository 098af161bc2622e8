// Self-contained small-scale smooth NLP engine: bound constraints plus smooth
// equality/inequality constraints, solved by an augmented-Lagrangian outer
// loop with a projected quasi-Newton (L-BFGS) inner loop. Local optimality
// only; deterministic; warm-startable.
#pragma once

#include <Eigen/Dense>
#include <functional>
#include <limits>

namespace opfdd::nlp {

enum class Status { converged, max_iterations, unbounded_below };

// Objective: returns f(x); writes the gradient if grad != nullptr.
using Objective =
    std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

// Vector constraint: writes values (size m); writes the m x n Jacobian if
// jac != nullptr.
using Constraint = std::function<void(const Eigen::VectorXd& x,
                                      Eigen::VectorXd& val,
                                      Eigen::MatrixXd* jac)>;

struct Problem {
  int n = 0;
  Eigen::VectorXd lower, upper;  // box bounds; +/-inf allowed
  Objective objective;
  int n_eq = 0;    // h(x) = 0
  Constraint equalities;
  int n_ineq = 0;  // g(x) <= 0
  Constraint inequalities;
};

struct Options {
  double tol = 1e-8;          // feasibility tolerance
  // Stationarity tolerance; 0 means "same as tol". With constraints present,
  // the augmented-Lagrangian merit flattens to machine precision well before
  // its gradient does, so a first-order inner loop cannot certify projected
  // gradients much below ~sqrt(eps * penalty); callers with equality or
  // inequality constraints should allow a looser value here.
  double stat_tol = 0;
  int max_outer = 200;
  int max_inner = 500;        // inner iterations per outer round
  double penalty_init = 10;
  double penalty_growth = 10;
  double unbounded_floor = -1e12;  // f below this => unbounded_below
  int lbfgs_memory = 10;
};

struct Result {
  Eigen::VectorXd x;
  double f = 0;
  double kkt_residual = 0;  // max(projected gradient norm, violation)
  Status status = Status::max_iterations;
  int outer_iterations = 0;
  int inner_iterations = 0;  // total across outer rounds
  Eigen::VectorXd eq_multipliers, ineq_multipliers;
};

// x0 is clipped into the bounds before the first iteration. Deterministic:
// identical inputs give bit-identical results.
Result solve(const Problem& p, const Eigen::VectorXd& x0,
             const Options& opts = {});

inline constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace opfdd::nlp
