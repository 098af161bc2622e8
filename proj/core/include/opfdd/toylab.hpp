// Two-variable laboratory problems with a single consensus constraint
// x1 = x2: exact dual evaluation by brute force, plus small ADMM, proximal,
// and subgradient drivers whose pathologies are known in closed form.
#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "opfdd/errors.hpp"

namespace opfdd::toy {

// min f1(x1) + f2(x2)  s.t.  x1 = x2,  x2 in [x2_lo, x2_hi].
// The interval is the exact closed form of the smooth inequality g2 <= 0
// (g2 empty when x2 is free). grid_lo/hi bound the brute-force search; the
// domain is documented per problem and covers every iterate the drivers
// can produce.
struct Problem {
  const char* name = "";
  std::function<double(double)> f1, f2;
  std::function<double(double)> df1, df2;
  std::function<double(double)> g2, dg2;  // empty when x2 is unconstrained
  double x2_lo = 0, x2_hi = 0;
  double grid_lo = 0, grid_hi = 0;
};

// Sextic/quintic problem: f = 2 x1^6 + x2^5 - 2 x2^2 + 2.5 with
// x2 constrained by 1 - 2 exp(-2 x2^2) <= 0, i.e. |x2| <= sqrt(ln(2)/2).
Problem problem_a();
// Piecewise-linear/quadratic problem: f = -3|x1| + (x2 - 1)^2, x2 free.
Problem problem_b();

enum class InnerMode { optimal, suboptimal };

struct ArgPair {
  double x1 = 0, x2 = 0;
};

struct DualEval {
  double value = 0;
  bool bounded = true;  // false: unbounded below (value is meaningless)
  // Every minimizer found, distinct up to the grid scale; more than one
  // entry at a kink of the dual.
  std::vector<ArgPair> argmins;
};

// D(lambda) = min { f(x) + lambda (x1 - x2) + (rho/2)(x1 - x2)^2 } by grid
// search (step 1e-3) with golden-section polish. rho = 0 is the classical
// dual; rho > 0 the augmented one. Unboundedness is detected by doubling
// the search domain and watching the minimum escape. In suboptimal mode the
// inner minimization returns the stationary point with the second-smallest
// value instead (the value reported is the Lagrangian there).
DualEval dual_exact(const Problem& p, double lambda, double rho = 0,
                    InnerMode mode = InnerMode::optimal);

// Local minima of the consensus restriction phi(t) = f1(t) + f2(t) over the
// feasible interval, sorted by value; front() is the global optimum p*.
struct ConsensusMin {
  double x = 0, value = 0;
};
std::vector<ConsensusMin> consensus_minima(const Problem& p);

enum class ToyStatus { converged, max_iterations, oscillating };

struct ToyRow {
  int k = 0;
  double x1 = 0, x2 = 0, lambda = 0;
  double primal_res = 0, dual_res = 0;
  double objective = 0;  // f1(x1) + f2(x2)
};

struct ToyRun {
  ToyStatus status = ToyStatus::max_iterations;
  int iterations = 0;
  double x1 = 0, x2 = 0, lambda = 0, objective = 0;
  std::vector<ToyRow> trace;
};

// Fixed inner start for local-mode x-updates (each update runs the NLP
// engine from this same point every iteration, which is what makes the
// scheme land on and defend suboptimal points).
struct LocalStart {
  double x1 = 0, x2 = 0;
};

// Alternating-direction iteration on the consensus problem; x1-update,
// then x2-update, then lambda += rho (x1 - x2). Global mode solves each
// one-variable subproblem by grid+polish; local mode runs the NLP engine
// from `local`. Stops when max(|x1 - x2|, |x2 step|) < tol: the primal
// residual plus the consensus-block step, which tracks the dual residual
// direction without a rho scaling that would make the effective threshold
// penalty-dependent. Reports oscillating when the best residual stops
// improving for 2000 consecutive iterations.
ToyRun toy_admm(const Problem& p, double rho, double x2_start,
                const std::optional<LocalStart>& local = std::nullopt,
                double lambda_start = 0, int max_iter = 10000,
                double tol = 1e-6);

// Simultaneous (Jacobi) proximal iteration: both variables update against
// the other's previous value with weight nu/2 on the step, then
// lambda += nu (x1 - x2). Same stopping rules as toy_admm, with the dual
// residual taken as the larger of the two block steps.
ToyRun toy_proximal(const Problem& p, double nu, double x1_start,
                    double x2_start, double lambda_start = 0,
                    int max_iter = 10000, double tol = 1e-6);

struct SubgradRow {
  int k = 0;
  double lambda = 0;
  double dual_value = 0;
  double primal_res = 0;  // x1 - x2 at the inner solution
};

struct SubgradRun {
  std::vector<SubgradRow> trace;
  double best_dual = 0;  // sup over the trajectory
  double final_dual = 0;
  double final_lambda = 0;
};

// Fixed-step dual ascent lambda += step (x1 - x2) with the inner solve in
// the given mode. A zero step leaves lambda constant.
SubgradRun toy_subgradient(const Problem& p, double step, double lambda_start,
                           int iterations, InnerMode mode);

}  // namespace opfdd::toy
