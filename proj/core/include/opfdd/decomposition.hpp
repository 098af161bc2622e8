// Per-component subproblems of the modified dual: closed-form generator and
// bus updates, NLP line subproblems, coupling targets, and the dual value.
#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "opfdd/formulation.hpp"
#include "opfdd/network.hpp"
#include "opfdd/nlp.hpp"

namespace opfdd {

// The three coordination algorithms:
//   a1: proximal regularization only, single simultaneous round.
//   a2: adds the voltage/angle consensus penalty (rho_vth); two rounds per
//       iteration (generators+lines, then buses).
//   a3: a2 plus power-coupling target penalties (rho_pq).
enum class Variant { a1, a2, a3 };

struct AlgoParams {
  Variant variant = Variant::a3;
  double nu = 0;        // proximal weight
  double rho_pq = 0;    // power-coupling penalty (a3)
  double rho_vth = 0;   // consensus penalty (a2/a3)
  double alpha_i = 0;   // multiplier step, bus balance pairs
  double alpha_ij = 0;  // multiplier step, consensus pairs
  double epsilon = 1e-4;
};

// Component-local primal variables.
struct GenVars {
  double p = 0, q = 0;
};
struct BusVars {
  double v = 1, th = 0;
};
// Line state: four directed flows plus the line-local duplicates of the
// endpoint voltages/angles.
struct LineVars {
  double p_f = 0, q_f = 0, p_t = 0, q_t = 0;
  double v_f = 1, th_f = 0, v_t = 1, th_t = 0;
};

struct ComponentState {
  std::vector<GenVars> gen;
  std::vector<BusVars> bus;
  std::vector<LineVars> line;
};

// Multipliers (and, reusing the shape, subgradients): one (p,q) pair per bus
// for the balance rows, one (v,th) pair per branch end for the consensus
// rows — 2|B| + 4|L| scalars.
struct MultiplierSet {
  Eigen::VectorXd bus_p, bus_q;      // per bus
  Eigen::VectorXd from_v, from_th;   // per branch, from end
  Eigen::VectorXd to_v, to_th;       // per branch, to end
};

MultiplierSet zero_multipliers(const Network& net);
ComponentState flat_component_state(const Network& net);

// ---- generator subproblem ------------------------------------------------
// minimize f(p) + lam_p p + lam_q q  (+ nu/2 ||.-prev||^2)
//          (+ rho_pq ((p-pc)^2 + (q-qc)^2) for a3)
// over the dispatch box; exact closed form.
struct GenSolve {
  GenVars x;
  double value = 0;  // subproblem optimum = modified-dual summand
};
GenSolve gen_subproblem(const Generator& g, double lam_p, double lam_q,
                        const GenVars& prev, const AlgoParams& params,
                        const std::optional<std::pair<double, double>>& target);

// ---- bus subproblem ------------------------------------------------------
// Inputs gathered from the bus's incident branch ends, one entry per end:
// consensus multipliers, and (a2/a3) the duplicate values from this
// iteration's line solves.
struct BusLocal {
  std::vector<double> lam_v, lam_th;
  std::vector<double> dup_v, dup_th;  // ignored for a1
};
struct BusSolve {
  BusVars x;
  double value = 0;
};
BusSolve bus_subproblem(const Bus& b, double lam_p, double lam_q,
                        const BusLocal& local, const BusVars& prev,
                        const AlgoParams& params);

// ---- line subproblem -----------------------------------------------------
struct LineLocal {
  double lam_p_i = 0, lam_q_i = 0;  // balance multipliers at the from bus
  double lam_p_j = 0, lam_q_j = 0;  // ... at the to bus
  double lam_v_f = 0, lam_th_f = 0;  // consensus multipliers, from end
  double lam_v_t = 0, lam_th_t = 0;  // ... to end
  double v_i = 1, th_i = 0, v_j = 1, th_j = 0;  // bus anchors (a2/a3)
  double v_min_f = 0, v_max_f = 0, v_min_t = 0, v_max_t = 0;  // duplicate box
};
// Power-coupling targets for the four directed flows (a3).
struct FlowTargets {
  double pc_f = 0, qc_f = 0, pc_t = 0, qc_t = 0;
};
struct LineSolve {
  LineVars x;
  double value = 0;
  nlp::Status status = nlp::Status::converged;
};
// Local minimizer via the NLP engine of the 4-variable reduced problem (the
// flows are substituted); constraints: duplicate voltage boxes, the
// angle-difference window, and the two squared thermal limits. warm_start
// gives the starting duplicates (flat by default, per the run protocol).
LineSolve line_subproblem(const Branch& br, const BranchCoeffs& c,
                          const LineLocal& local,
                          const std::optional<FlowTargets>& targets,
                          const LineVars& prev, const AlgoParams& params,
                          const LineVars& warm_start);

// ---- coupling targets (a3) -----------------------------------------------
// For each component, the injection the rest of its bus's balance implies:
//   pc for a generator g at bus i: -sum_{h in G_i \ g} p_h + sum_j p_ij
//                                  + g_sh v_i^2 + p_d
//   pc for branch end (i,j):       -sum_{m in B_i \ j} p_im + sum_g p_g
//                                  - p_d - g_sh v_i^2
// and the q analogues with the shunt sign flipped; all evaluated at the
// given (iteration-k) state.
struct CouplingTargets {
  std::vector<std::pair<double, double>> gen;  // (pc, qc) per generator
  std::vector<FlowTargets> line;               // per branch
};
CouplingTargets coupling_targets(const Network& net, const ComponentState& s);

// ---- modified dual value ---------------------------------------------------
// D(lam) for the given variant: re-solves every subproblem from (lam, state)
// and sums the optimal values, in $/hr. `workers` > 1 parallelizes the line
// solves (index-ordered reduction keeps the sum deterministic).
double modified_dual_value(const Network& net, const MultiplierSet& lam,
                           const ComponentState& state,
                           const AlgoParams& params, int workers = 1);

}  // namespace opfdd
