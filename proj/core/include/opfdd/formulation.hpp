// Centralized OPF formulation: flow equations, balance residuals, generation
// cost, analytic derivatives, and the centralized solve.
#pragma once

#include <Eigen/Dense>

#include "opfdd/network.hpp"
#include "opfdd/nlp.hpp"

namespace opfdd {

// Full network operating state. v/theta are indexed like Network::buses,
// p_g/q_g like Network::generators, flows like Network::branches.
struct FlowState {
  Eigen::VectorXd v, theta;
  Eigen::VectorXd p_g, q_g;
  Eigen::VectorXd p_f, q_f, p_t, q_t;
};

struct BranchFlows {
  double p_f = 0, q_f = 0, p_t = 0, q_t = 0;
};

// Polar flow equations for one branch.
BranchFlows branch_flows(const BranchCoeffs& c, double v_f, double th_f,
                         double v_t, double th_t);

// Analytic Jacobian of (p_f, q_f, p_t, q_t) w.r.t. (v_f, th_f, v_t, th_t).
Eigen::Matrix4d flow_jacobian(const BranchCoeffs& c, double v_f, double th_f,
                              double v_t, double th_t);

// Flat start: v = 1, theta = 0, dispatch at box midpoints, flows evaluated
// from the flat voltages.
FlowState flat_start(const Network& net);

// Recompute the flow fields of `s` from its voltages/angles.
void refresh_flows(const Network& net, FlowState& s);

// Per-bus power-balance residuals
//   r_p,i = sum_g p_g - p_d,i - sum_lines p_ij - g_sh,i v_i^2
//   r_q,i = sum_g q_g - q_d,i - sum_lines q_ij + b_sh,i v_i^2
// evaluated from the state's voltage variables (flows recomputed, not read
// from the state's flow fields). Reductions are index-ordered.
struct BalanceResiduals {
  Eigen::VectorXd p, q;
};
BalanceResiduals balance_residuals(const Network& net, const FlowState& s);

// Total generation cost in $/hr for a per-unit dispatch vector.
double generation_cost(const Network& net, const Eigen::VectorXd& p_g);

struct CentralizedOptions {
  double tol = 1e-8;
  int max_outer = 200;
  int max_inner = 5000;
};

struct CentralizedResult {
  FlowState state;
  double cost = 0;          // $/hr
  nlp::Status status = nlp::Status::max_iterations;
  double kkt_residual = 0;
  int ref_bus = 0;          // internal index of the angle-reference bus
};

// Raised when the centralized NLP exhausts iterations without reaching the
// requested KKT tolerance.
class SolverDiverged : public Error {
 public:
  using Error::Error;
};

// Solve the full nonconvex OPF (local solution) with the built-in NLP
// engine. Variables are (v, theta, p_g, q_g); flows are substituted. The
// angle of the lowest-numbered generator bus is fixed to zero.
CentralizedResult solve_centralized(const Network& net, const FlowState& start,
                                    const CentralizedOptions& opts = {});
CentralizedResult solve_centralized(const Network& net,
                                    const CentralizedOptions& opts = {});

}  // namespace opfdd
