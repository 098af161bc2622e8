// Dual-ascent coordination loop: iterate subproblem solves, take a
// subgradient step on the multipliers, trace progress, and report gaps
// against the centralized solution.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "opfdd/decomposition.hpp"
#include "opfdd/network.hpp"

namespace opfdd {

inline constexpr const char* kVersion = "0.1.0";

// Raised by lookup_setting for names outside A..T.
class UnknownSetting : public Error {
 public:
  using Error::Error;
};

// Raised by gaps() when the centralized cost is zero.
class DivisionByZero : public Error {
 public:
  using Error::Error;
};

// Named parameter settings A..T: (nu, rho_pq, rho_vth, alpha_i, alpha_ij).
// The returned params have variant a3 and epsilon 1e-4; callers override.
AlgoParams lookup_setting(char name);

// Balance residuals per bus and duplicate mismatches per branch end,
// evaluated at the given state. Ascent direction for the dual.
MultiplierSet subgradient(const Network& net, const ComponentState& s);

// One dual ascent step: lam + alpha .* g, steps per pair family.
MultiplierSet update_multipliers(const MultiplierSet& lam,
                                 const MultiplierSet& g,
                                 const AlgoParams& params);

// Euclidean norm of the stacked 2|B| + 4|L| subgradient.
double residual_norm(const MultiplierSet& g);

// (amd_gap, ro_gap) in percent:
//   amd_gap = (p_ipm - d_amd) / p_ipm * 100   -- duality gap proxy
//   ro_gap  = (p_ipm - p_amd) / p_ipm * 100   -- cost recovery gap
std::pair<double, double> gaps(double p_ipm, double p_amd, double d_amd);

enum class RunStatus { converged, max_iterations, diverged };

struct IterationRow {
  std::int64_t k = 0;        // iteration counter, 1-based
  double residual_norm = 0;  // ||g|| after this iteration's solves
  double dual_value = 0;     // modified dual at (lam_k, state)
  double gen_cost = 0;       // plain generation cost at the iterate
  double wall_ms = 0;        // elapsed wall time since run start
};

struct RunReport {
  bool converged = false;
  RunStatus status = RunStatus::max_iterations;
  std::int64_t iterations = 0;
  double p_ipm = 0;   // centralized objective
  double p_amd = 0;   // generation cost at the final iterate
  double d_amd = 0;   // final modified dual value
  double amd_gap = 0;
  double ro_gap = 0;
  double final_residual = 0;
  AlgoParams params;
  int angle_bounds_defaulted = 0;
  std::string version = kVersion;
};

struct RunOptions {
  AlgoParams params;
  std::int64_t max_iter = 200000;
  int workers = 0;  // 0 = hardware concurrency, 1 = strictly serial
  // Starting component state; flat (v=1, th=0, p=q=dispatch midpoint,
  // flows 0) when absent.
  std::optional<ComponentState> seed;
  // Start lines from the previous iterate instead of flat (experimentation
  // flag; changes which local minimizer the line solves land on).
  bool lines_warm_start_prev = false;
  // Centralized objective for the gap rows; nullopt = solve it here.
  std::optional<double> p_ipm;
};

struct RunResult {
  RunReport report;
  std::vector<IterationRow> trace;
  ComponentState state;
  MultiplierSet lam;
};

// The coordination loop. Starts from flat state and zero multipliers;
// stops when residual_norm < params.epsilon (converged), after max_iter
// iterations (max_iterations), or when the residual exceeds 1e6 x its
// first value (diverged). Never throws for these outcomes; the report
// carries the status.
RunResult run(const Network& net, const RunOptions& opts);

// Trace serialization: "k,residual_norm,dual_value,gen_cost,wall_ms\n" then
// one row per kept iteration (every thin-th row, first and last always
// kept). Shortest round-trip formatting.
std::string trace_csv(const std::vector<IterationRow>& rows, int thin = 1);

// Run report as a pretty-printed JSON object (schemas/report.schema.json).
std::string report_json(const RunReport& r, const std::string& case_name,
                        char setting);

}  // namespace opfdd
