// Hot-path microbenchmarks. Build with -DOPFDD_BUILD_BENCHMARKS=ON (the
// default when google-benchmark is installed) and run the binary directly.
#include <benchmark/benchmark.h>

#include <optional>
#include <string>

#include "opfdd/coordinator.hpp"
#include "opfdd/decomposition.hpp"
#include "opfdd/formulation.hpp"
#include "opfdd/network.hpp"

using namespace opfdd;

namespace {

const std::string kData = OPFDD_DATA_DIR;

const Network& case9() {
  static const Network net = parse_matpower_file(kData + "/case9.m");
  return net;
}

void BM_parse_case9(benchmark::State& state) {
  for (auto _ : state) {
    const Network net = parse_matpower_file(kData + "/case9.m");
    benchmark::DoNotOptimize(net.buses.size());
  }
}
BENCHMARK(BM_parse_case9);

void BM_branch_flows(benchmark::State& state) {
  const BranchCoeffs co = branch_coeffs(case9().branches[0]);
  double th = 0.01;
  for (auto _ : state) {
    const BranchFlows f = branch_flows(co, 1.02, th, 0.99, -0.02);
    benchmark::DoNotOptimize(f.p_f);
    th += 1e-9;  // defeat value caching across iterations
  }
}
BENCHMARK(BM_branch_flows);

void BM_flow_jacobian(benchmark::State& state) {
  const BranchCoeffs co = branch_coeffs(case9().branches[0]);
  double th = 0.01;
  for (auto _ : state) {
    const Eigen::Matrix4d j = flow_jacobian(co, 1.02, th, 0.99, -0.02);
    benchmark::DoNotOptimize(j(0, 0));
    th += 1e-9;
  }
}
BENCHMARK(BM_flow_jacobian);

void BM_gen_subproblem(benchmark::State& state) {
  const Generator& g = case9().generators[0];
  AlgoParams prm = lookup_setting('B');
  const GenVars prev{1.0, 0.2};
  const auto tgt = std::make_pair(0.9, 0.1);
  double lam = 50;
  for (auto _ : state) {
    const GenSolve s = gen_subproblem(g, lam, -20, prev, prm, tgt);
    benchmark::DoNotOptimize(s.value);
    lam += 1e-9;
  }
}
BENCHMARK(BM_gen_subproblem);

void BM_bus_subproblem(benchmark::State& state) {
  const Network& net = case9();
  AlgoParams prm = lookup_setting('B');
  BusLocal local;
  for (int e = 0; e < 3; ++e) {
    local.lam_v.push_back(2.0 + e);
    local.lam_th.push_back(-1.0);
    local.dup_v.push_back(1.01);
    local.dup_th.push_back(0.02);
  }
  const BusVars prev{1.0, 0.0};
  double lam = 30;
  for (auto _ : state) {
    const BusSolve s =
        bus_subproblem(net.buses[3], lam, -10, local, prev, prm);
    benchmark::DoNotOptimize(s.value);
    lam += 1e-9;
  }
}
BENCHMARK(BM_bus_subproblem);

void BM_line_subproblem(benchmark::State& state) {
  const Network& net = case9();
  const Branch& br = net.branches[0];
  const BranchCoeffs co = branch_coeffs(br);
  AlgoParams prm = lookup_setting('B');
  LineLocal local;
  local.lam_p_i = 20;
  local.lam_q_i = -5;
  local.lam_p_j = 15;
  local.lam_q_j = 5;
  local.v_i = 1.0;
  local.th_i = 0.0;
  local.v_j = 1.0;
  local.th_j = -0.05;
  local.v_min_f = 0.9;
  local.v_max_f = 1.1;
  local.v_min_t = 0.9;
  local.v_max_t = 1.1;
  const FlowTargets tgt{0.5, 0.1, -0.5, -0.05};
  const LineVars prev;
  for (auto _ : state) {
    const LineSolve s =
        line_subproblem(br, co, local, tgt, prev, prm, LineVars{});
    benchmark::DoNotOptimize(s.value);
  }
}
BENCHMARK(BM_line_subproblem)->Unit(benchmark::kMicrosecond);

void BM_modified_dual_case9(benchmark::State& state) {
  const Network& net = case9();
  const ComponentState s = flat_component_state(net);
  const MultiplierSet lam = zero_multipliers(net);
  const AlgoParams prm = lookup_setting('B');
  for (auto _ : state) {
    benchmark::DoNotOptimize(modified_dual_value(net, lam, s, prm, 1));
  }
}
BENCHMARK(BM_modified_dual_case9)->Unit(benchmark::kMicrosecond);

void BM_coordinator_sweep_case9(benchmark::State& state) {
  const Network& net = case9();
  RunOptions opts;
  opts.params = lookup_setting('B');
  opts.max_iter = 1;
  opts.workers = 1;
  opts.p_ipm = 1.0;  // placeholder: skips the centralized presolve
  for (auto _ : state) {
    const RunResult r = run(net, opts);
    benchmark::DoNotOptimize(r.trace.back().residual_norm);
  }
}
BENCHMARK(BM_coordinator_sweep_case9)->Unit(benchmark::kMicrosecond);

void BM_centralized_case9(benchmark::State& state) {
  const Network& net = case9();
  for (auto _ : state) {
    const CentralizedResult r = solve_centralized(net);
    benchmark::DoNotOptimize(r.cost);
  }
}
BENCHMARK(BM_centralized_case9)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
