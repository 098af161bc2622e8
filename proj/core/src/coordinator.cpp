#include "opfdd/coordinator.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <nlohmann/json.hpp>

#include "opfdd/formulation.hpp"
#include "parallel.hpp"

namespace opfdd {

AlgoParams lookup_setting(char name) {
  // (nu, rho_pq, rho_vth, alpha_i, alpha_ij) per setting letter.
  struct Row {
    double nu, rho_pq, rho_vth, alpha_i, alpha_ij;
  };
  static constexpr Row kTable[] = {
      /* A */ {3000, 30, 300000, 300, 300000},
      /* B */ {1000, 100, 10000, 100, 10000},
      /* C */ {1000, 1000, 100000, 100, 100000},
      /* D */ {100, 1, 10000, 10, 10000},
      /* E */ {5000, 500, 50000, 500, 50000},
      /* F */ {3000, 300, 300000, 300, 300000},
      /* G */ {100, 10, 1000, 10, 1000},
      /* H */ {5000, 500, 500000, 500, 500000},
      /* I */ {100, 10, 10000, 10, 10000},
      /* J */ {10000, 100, 100000, 1000, 100000},
      /* K */ {10000, 1000, 10000, 1000, 10000},
      /* L */ {1000, 100, 100000, 100, 100000},
      /* M */ {8000, 800, 800000, 800, 800000},
      /* N */ {5000, 500, 100000, 500, 100000},
      /* O */ {80000, 8000, 100000, 8000, 100000},
      /* P */ {10000, 1000, 100000, 1000, 100000},
      /* Q */ {10000, 1000, 100000, 1000, 100000},
      /* R */ {1000, 10, 10000, 100, 10000},
      /* S */ {50000, 5000, 500000, 5000, 500000},
      /* T */ {8000, 800, 100000, 800, 100000},
  };
  if (name < 'A' || name > 'T')
    throw UnknownSetting(std::string("unknown setting '") + name +
                         "' (expected A..T)");
  const Row& r = kTable[name - 'A'];
  AlgoParams p;
  p.variant = Variant::a3;
  p.nu = r.nu;
  p.rho_pq = r.rho_pq;
  p.rho_vth = r.rho_vth;
  p.alpha_i = r.alpha_i;
  p.alpha_ij = r.alpha_ij;
  p.epsilon = 1e-4;
  return p;
}

MultiplierSet subgradient(const Network& net, const ComponentState& s) {
  MultiplierSet g = zero_multipliers(net);
  const auto nb = static_cast<Eigen::Index>(net.buses.size());
  for (Eigen::Index i = 0; i < nb; ++i) {
    const Bus& b = net.buses[i];
    const double v = s.bus[i].v;
    double rp = -b.p_load - b.g_shunt * v * v;
    double rq = -b.q_load + b.b_shunt * v * v;
    for (int gi : net.bus_generators[i]) {
      rp += s.gen[gi].p;
      rq += s.gen[gi].q;
    }
    for (const BranchEnd& end : net.bus_branch_ends[i]) {
      const LineVars& lv = s.line[end.branch];
      rp -= end.at_from ? lv.p_f : lv.p_t;
      rq -= end.at_from ? lv.q_f : lv.q_t;
    }
    g.bus_p[i] = rp;
    g.bus_q[i] = rq;
  }
  for (size_t l = 0; l < net.branches.size(); ++l) {
    const Branch& br = net.branches[l];
    const int i = net.bus_index(br.from_bus);
    const int j = net.bus_index(br.to_bus);
    const LineVars& lv = s.line[l];
    const auto li = static_cast<Eigen::Index>(l);
    g.from_v[li] = s.bus[i].v - lv.v_f;
    g.from_th[li] = s.bus[i].th - lv.th_f;
    g.to_v[li] = s.bus[j].v - lv.v_t;
    g.to_th[li] = s.bus[j].th - lv.th_t;
  }
  return g;
}

MultiplierSet update_multipliers(const MultiplierSet& lam,
                                 const MultiplierSet& g,
                                 const AlgoParams& params) {
  MultiplierSet out;
  out.bus_p = lam.bus_p + params.alpha_i * g.bus_p;
  out.bus_q = lam.bus_q + params.alpha_i * g.bus_q;
  out.from_v = lam.from_v + params.alpha_ij * g.from_v;
  out.from_th = lam.from_th + params.alpha_ij * g.from_th;
  out.to_v = lam.to_v + params.alpha_ij * g.to_v;
  out.to_th = lam.to_th + params.alpha_ij * g.to_th;
  return out;
}

double residual_norm(const MultiplierSet& g) {
  return std::sqrt(g.bus_p.squaredNorm() + g.bus_q.squaredNorm() +
                   g.from_v.squaredNorm() + g.from_th.squaredNorm() +
                   g.to_v.squaredNorm() + g.to_th.squaredNorm());
}

std::pair<double, double> gaps(double p_ipm, double p_amd, double d_amd) {
  if (p_ipm == 0)
    throw DivisionByZero("centralized objective is zero; gaps undefined");
  const double amd_gap = (p_ipm - d_amd) / p_ipm * 100.0;
  const double ro_gap = (p_ipm - p_amd) / p_ipm * 100.0;
  return {amd_gap, ro_gap};
}

RunResult run(const Network& net, const RunOptions& opts) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  const AlgoParams& params = opts.params;
  const bool a1 = params.variant == Variant::a1;
  const bool a3 = params.variant == Variant::a3;
  const int workers = detail::resolve_workers(opts.workers);
  const char* log_env = std::getenv("OPF_DD_LOG");
  const bool logging = log_env != nullptr && log_env[0] != '\0';

  const int nb = static_cast<int>(net.buses.size());
  const int ng = static_cast<int>(net.generators.size());
  const int nl = static_cast<int>(net.branches.size());

  std::vector<BranchCoeffs> coeffs(nl);
  std::vector<int> from_idx(nl), to_idx(nl);
  for (int l = 0; l < nl; ++l) {
    coeffs[l] = branch_coeffs(net.branches[l]);
    from_idx[l] = net.bus_index(net.branches[l].from_bus);
    to_idx[l] = net.bus_index(net.branches[l].to_bus);
  }

  RunResult res;
  res.report.params = params;
  res.report.angle_bounds_defaulted = net.angle_defaulted_count();
  res.report.p_ipm =
      opts.p_ipm ? *opts.p_ipm : solve_centralized(net).cost;

  ComponentState state = opts.seed ? *opts.seed : flat_component_state(net);
  MultiplierSet lam = zero_multipliers(net);

  std::vector<double> gen_value(ng), line_value(nl), bus_value(nb);
  std::vector<char> line_capped(nl, 0);  // char: parallel writes need real slots
  double g1_norm = -1;
  RunStatus status = RunStatus::max_iterations;
  double last_rn = 0, last_dual = 0, last_cost = 0;

  for (std::int64_t k = 1; k <= opts.max_iter; ++k) {
    ComponentState next = state;
    const std::optional<CouplingTargets> targets =
        a3 ? std::optional<CouplingTargets>(coupling_targets(net, state))
           : std::nullopt;

    // Round 1: generators and lines, all from (lam, state). Cheap closed
    // forms stay serial; the NLP line solves fan out.
    for (int g = 0; g < ng; ++g) {
      const Generator& gen = net.generators[g];
      const int i = net.bus_index(gen.bus);
      std::optional<std::pair<double, double>> tg;
      if (targets) tg = targets->gen[g];
      GenSolve gs = gen_subproblem(gen, lam.bus_p[i], lam.bus_q[i],
                                   state.gen[g], params, tg);
      next.gen[g] = gs.x;
      gen_value[g] = gs.value;
    }
    detail::parallel_for(nl, workers, [&](int l) {
      const Branch& br = net.branches[l];
      const int i = from_idx[l], j = to_idx[l];
      LineLocal local;
      local.lam_p_i = lam.bus_p[i];
      local.lam_q_i = lam.bus_q[i];
      local.lam_p_j = lam.bus_p[j];
      local.lam_q_j = lam.bus_q[j];
      local.lam_v_f = lam.from_v[l];
      local.lam_th_f = lam.from_th[l];
      local.lam_v_t = lam.to_v[l];
      local.lam_th_t = lam.to_th[l];
      local.v_i = state.bus[i].v;
      local.th_i = state.bus[i].th;
      local.v_j = state.bus[j].v;
      local.th_j = state.bus[j].th;
      local.v_min_f = net.buses[i].v_min;
      local.v_max_f = net.buses[i].v_max;
      local.v_min_t = net.buses[j].v_min;
      local.v_max_t = net.buses[j].v_max;
      std::optional<FlowTargets> tg;
      if (targets) tg = targets->line[l];
      LineSolve ls = line_subproblem(
          br, coeffs[l], local, tg, state.line[l], params,
          opts.lines_warm_start_prev ? state.line[l] : LineVars{});
      next.line[l] = ls.x;
      line_value[l] = ls.value;
      line_capped[l] = ls.status == nlp::Status::max_iterations ? 1 : 0;
    });

    // Round 2 (a1: same round, anchored at the iteration-k duplicates):
    // buses. a2/a3 use the just-computed line duplicates.
    const ComponentState& dup_src = a1 ? state : next;
    for (int i = 0; i < nb; ++i) {
      BusLocal local;
      const auto& ends = net.bus_branch_ends[i];
      local.lam_v.reserve(ends.size());
      local.lam_th.reserve(ends.size());
      local.dup_v.reserve(ends.size());
      local.dup_th.reserve(ends.size());
      for (const BranchEnd& end : ends) {
        const int l = end.branch;
        local.lam_v.push_back(end.at_from ? lam.from_v[l] : lam.to_v[l]);
        local.lam_th.push_back(end.at_from ? lam.from_th[l] : lam.to_th[l]);
        const LineVars& lv = dup_src.line[l];
        local.dup_v.push_back(end.at_from ? lv.v_f : lv.v_t);
        local.dup_th.push_back(end.at_from ? lv.th_f : lv.th_t);
      }
      BusSolve bs = bus_subproblem(net.buses[i], lam.bus_p[i], lam.bus_q[i],
                                   local, state.bus[i], params);
      next.bus[i] = bs.x;
      bus_value[i] = bs.value;
    }

    // Modified dual value at lam: index-ordered reduction for determinism.
    double dual = 0;
    for (int g = 0; g < ng; ++g) dual += gen_value[g];
    for (int l = 0; l < nl; ++l) dual += line_value[l];
    for (int i = 0; i < nb; ++i) dual += bus_value[i];

    int capped = 0;
    for (int l = 0; l < nl; ++l) capped += line_capped[l] ? 1 : 0;

    state = std::move(next);
    const MultiplierSet g = subgradient(net, state);
    const double rn = residual_norm(g);

    double cost = 0;
    for (int gi = 0; gi < ng; ++gi) {
      const Generator& gen = net.generators[gi];
      cost += (gen.c2 * state.gen[gi].p + gen.c1) * state.gen[gi].p + gen.c0;
    }

    const double wall_ms =
        std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    res.trace.push_back({k, rn, dual, cost, wall_ms});
    last_rn = rn;
    last_dual = dual;
    last_cost = cost;
    res.report.iterations = k;

    if (logging && (capped > 0 || k % 1000 == 0)) {
      std::fprintf(stderr, "[opfdd] k=%lld |g|=%.6e D=%.6f%s\n",
                   static_cast<long long>(k), rn, dual,
                   capped > 0 ? " (line solves hit the iteration cap)" : "");
    }

    if (k == 1) g1_norm = rn;
    if (rn < params.epsilon) {
      status = RunStatus::converged;
      break;
    }
    if (rn > 1e6 * g1_norm) {
      status = RunStatus::diverged;
      break;
    }
    lam = update_multipliers(lam, g, params);
  }

  res.state = std::move(state);
  res.lam = std::move(lam);
  res.report.status = status;
  res.report.converged = status == RunStatus::converged;
  res.report.final_residual = last_rn;
  res.report.p_amd = last_cost;
  res.report.d_amd = last_dual;
  if (!res.trace.empty()) {
    const auto [amd, ro] =
        gaps(res.report.p_ipm, res.report.p_amd, res.report.d_amd);
    res.report.amd_gap = amd;
    res.report.ro_gap = ro;
  }
  return res;
}

namespace {

// Shortest decimal that round-trips to the same double.
std::string format_double(double x) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

const char* status_name(RunStatus s) {
  switch (s) {
    case RunStatus::converged:
      return "converged";
    case RunStatus::max_iterations:
      return "max_iterations";
    case RunStatus::diverged:
      return "diverged";
  }
  return "unknown";
}

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::a1:
      return "a1";
    case Variant::a2:
      return "a2";
    case Variant::a3:
      return "a3";
  }
  return "unknown";
}

}  // namespace

std::string trace_csv(const std::vector<IterationRow>& rows, int thin) {
  if (thin < 1) thin = 1;
  std::string out = "k,residual_norm,dual_value,gen_cost,wall_ms\n";
  const size_t n = rows.size();
  for (size_t i = 0; i < n; ++i) {
    if (i != 0 && i != n - 1 && i % static_cast<size_t>(thin) != 0) continue;
    const IterationRow& r = rows[i];
    out += std::to_string(r.k);
    out += ',';
    out += format_double(r.residual_norm);
    out += ',';
    out += format_double(r.dual_value);
    out += ',';
    out += format_double(r.gen_cost);
    out += ',';
    out += format_double(r.wall_ms);
    out += '\n';
  }
  return out;
}

std::string report_json(const RunReport& r, const std::string& case_name,
                        char setting) {
  nlohmann::ordered_json j;
  j["case"] = case_name;
  j["variant"] = variant_name(r.params.variant);
  if (setting != 0) j["setting"] = std::string(1, setting);
  j["converged"] = r.converged;
  j["status"] = status_name(r.status);
  j["iterations"] = r.iterations;
  j["p_ipm"] = r.p_ipm;
  j["p_amd"] = r.p_amd;
  j["d_amd"] = r.d_amd;
  j["amd_gap"] = r.amd_gap;
  j["ro_gap"] = r.ro_gap;
  j["final_residual"] = r.final_residual;
  j["params"] = {{"nu", r.params.nu},
                 {"rho_pq", r.params.rho_pq},
                 {"rho_vth", r.params.rho_vth},
                 {"alpha_i", r.params.alpha_i},
                 {"alpha_ij", r.params.alpha_ij},
                 {"epsilon", r.params.epsilon}};
  j["angle_bounds_defaulted"] = r.angle_bounds_defaulted;
  j["version"] = r.version;
  return j.dump(2) + "\n";
}

}  // namespace opfdd
