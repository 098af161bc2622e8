#include "opfdd/decomposition.hpp"

#include <algorithm>
#include <cmath>

#include "opfdd/errors.hpp"
#include "parallel.hpp"

namespace opfdd {

namespace {

double clamp(double x, double lo, double hi) {
  return std::min(std::max(x, lo), hi);
}

}  // namespace

MultiplierSet zero_multipliers(const Network& net) {
  MultiplierSet m;
  const auto nb = static_cast<Eigen::Index>(net.buses.size());
  const auto nl = static_cast<Eigen::Index>(net.branches.size());
  m.bus_p = Eigen::VectorXd::Zero(nb);
  m.bus_q = Eigen::VectorXd::Zero(nb);
  m.from_v = Eigen::VectorXd::Zero(nl);
  m.from_th = Eigen::VectorXd::Zero(nl);
  m.to_v = Eigen::VectorXd::Zero(nl);
  m.to_th = Eigen::VectorXd::Zero(nl);
  return m;
}

ComponentState flat_component_state(const Network& net) {
  ComponentState s;
  s.gen.resize(net.generators.size());
  s.bus.resize(net.buses.size());
  s.line.resize(net.branches.size());
  for (size_t g = 0; g < net.generators.size(); ++g) {
    s.gen[g].p = 0.5 * (net.generators[g].p_min + net.generators[g].p_max);
    s.gen[g].q = 0.5 * (net.generators[g].q_min + net.generators[g].q_max);
  }
  return s;  // BusVars/LineVars default to the flat point already
}

GenSolve gen_subproblem(const Generator& g, double lam_p, double lam_q,
                        const GenVars& prev, const AlgoParams& params,
                        const std::optional<std::pair<double, double>>& target) {
  const double nu = params.nu;
  const double rho = target ? params.rho_pq : 0.0;
  if (g.c2 + nu / 2 + rho <= 0)
    throw NonconvexQuadratic(
        "generator subproblem is not strictly convex (c2 + nu/2 + rho_pq <= "
        "0)");
  const double pc = target ? target->first : 0.0;
  const double qc = target ? target->second : 0.0;

  GenSolve out;
  out.x.p = clamp((nu * prev.p + 2 * rho * pc - g.c1 - lam_p) /
                      (2 * g.c2 + nu + 2 * rho),
                  g.p_min, g.p_max);
  const double denom_q = nu + 2 * rho;
  if (denom_q > 0) {
    out.x.q =
        clamp((nu * prev.q + 2 * rho * qc - lam_q) / denom_q, g.q_min, g.q_max);
  } else {
    // Degenerate (nu = rho = 0): the q part is linear. Minimize it over the
    // box; with zero slope keep the anchor.
    out.x.q = lam_q > 0 ? g.q_min
              : lam_q < 0 ? g.q_max
                          : clamp(prev.q, g.q_min, g.q_max);
  }
  const double p = out.x.p, q = out.x.q;
  out.value = (g.c2 * p + g.c1) * p + g.c0 + lam_p * p + lam_q * q +
              nu / 2 * ((p - prev.p) * (p - prev.p) +
                        (q - prev.q) * (q - prev.q)) +
              rho * ((p - pc) * (p - pc) + (q - qc) * (q - qc));
  return out;
}

BusSolve bus_subproblem(const Bus& b, double lam_p, double lam_q,
                        const BusLocal& local, const BusVars& prev,
                        const AlgoParams& params) {
  const bool a1 = params.variant == Variant::a1;
  const double nu = a1 ? params.nu : 0.0;
  const double rho = a1 ? 0.0 : params.rho_vth;
  const auto n_ends = local.lam_v.size();

  double sum_lam_v = 0, sum_lam_th = 0, sum_dup_v = 0, sum_dup_th = 0;
  for (size_t j = 0; j < n_ends; ++j) {
    sum_lam_v += local.lam_v[j];
    sum_lam_th += local.lam_th[j];
    if (!a1) {
      sum_dup_v += local.dup_v[j];
      sum_dup_th += local.dup_th[j];
    }
  }

  const double shunt_curv = 2 * (-lam_p * b.g_shunt + lam_q * b.b_shunt);
  const double a = shunt_curv + rho * n_ends + nu;
  const double den_th = rho * n_ends + nu;
  if (a <= 0 || den_th <= 0)
    throw NonCoerciveBus(
        "bus subproblem not coercive: raise rho_vtheta or nu relative to the "
        "shunt multipliers");

  BusSolve out;
  out.x.v = (rho * sum_dup_v - sum_lam_v + nu * prev.v) / a;
  out.x.th = (rho * sum_dup_th - sum_lam_th + nu * prev.th) / den_th;

  const double v = out.x.v, th = out.x.th;
  double value = sum_lam_v * v + sum_lam_th * th +
                 v * v * (-lam_p * b.g_shunt + lam_q * b.b_shunt) -
                 (lam_p * b.p_load + lam_q * b.q_load) +
                 nu / 2 * ((v - prev.v) * (v - prev.v) +
                           (th - prev.th) * (th - prev.th));
  if (!a1) {
    for (size_t j = 0; j < n_ends; ++j) {
      const double dv = v - local.dup_v[j];
      const double dth = th - local.dup_th[j];
      value += rho / 2 * (dv * dv + dth * dth);
    }
  }
  out.value = value;
  return out;
}

LineSolve line_subproblem(const Branch& br, const BranchCoeffs& c,
                          const LineLocal& local,
                          const std::optional<FlowTargets>& targets,
                          const LineVars& prev, const AlgoParams& params,
                          const LineVars& warm_start) {
  const bool a1 = params.variant == Variant::a1;
  const double nu_flow = params.nu;
  const double nu_vth = a1 ? params.nu : 0.0;
  const double rho_c = a1 ? 0.0 : params.rho_vth;
  const double rho_t = targets ? params.rho_pq : 0.0;
  const FlowTargets tg = targets.value_or(FlowTargets{});

  // Penalties can be 1e5-scale; solve an objective scaled to O(1) curvature
  // so the engine's absolute stationarity tolerance behaves like a relative
  // one. The reported value is unscaled.
  const double scale =
      std::max({1.0, nu_flow, nu_vth, rho_c, rho_t});
  const double inv_scale = 1.0 / scale;

  const double lam_flow[4] = {local.lam_p_i, local.lam_q_i, local.lam_p_j,
                              local.lam_q_j};
  const double lam_vth[4] = {local.lam_v_f, local.lam_th_f, local.lam_v_t,
                             local.lam_th_t};
  const double prev_flow[4] = {prev.p_f, prev.q_f, prev.p_t, prev.q_t};
  const double prev_vth[4] = {prev.v_f, prev.th_f, prev.v_t, prev.th_t};
  const double anchors[4] = {local.v_i, local.th_i, local.v_j, local.th_j};
  const double tgt[4] = {tg.pc_f, tg.qc_f, tg.pc_t, tg.qc_t};

  // y = [v_f, th_f, v_t, th_t]; flows are functions of y.
  auto objective = [&](const Eigen::VectorXd& y, Eigen::VectorXd* grad,
                       double obj_scale) {
    const BranchFlows fl = branch_flows(c, y[0], y[1], y[2], y[3]);
    const double flow[4] = {fl.p_f, fl.q_f, fl.p_t, fl.q_t};
    double f = 0;
    double w[4];  // dE/dflow
    for (int r = 0; r < 4; ++r) {
      const double dflow = flow[r] - prev_flow[r];
      const double dtgt = flow[r] - tgt[r];
      f += -lam_flow[r] * flow[r] + nu_flow * dflow * dflow +
           rho_t / 2 * dtgt * dtgt;
      w[r] = -lam_flow[r] + 2 * nu_flow * dflow + rho_t * dtgt;
    }
    for (int i = 0; i < 4; ++i) {
      const double dprev = y[i] - prev_vth[i];
      const double danch = y[i] - anchors[i];
      f += -lam_vth[i] * y[i] + nu_vth * dprev * dprev +
           rho_c / 2 * danch * danch;
    }
    if (grad) {
      const Eigen::Matrix4d J = flow_jacobian(c, y[0], y[1], y[2], y[3]);
      for (int i = 0; i < 4; ++i) {
        double gi = -lam_vth[i] + 2 * nu_vth * (y[i] - prev_vth[i]) +
                    rho_c * (y[i] - anchors[i]);
        for (int r = 0; r < 4; ++r) gi += J(r, i) * w[r];
        (*grad)[i] = gi * obj_scale;
      }
    }
    return f * obj_scale;
  };

  nlp::Problem prob;
  prob.n = 4;
  prob.lower.resize(4);
  prob.upper.resize(4);
  prob.lower << local.v_min_f, -nlp::kInf, local.v_min_t, -nlp::kInf;
  prob.upper << local.v_max_f, nlp::kInf, local.v_max_t, nlp::kInf;
  prob.objective = [&](const Eigen::VectorXd& y, Eigen::VectorXd* grad) {
    return objective(y, grad, inv_scale);
  };
  prob.n_ineq = 2 + (br.thermally_limited() ? 2 : 0);
  prob.inequalities = [&](const Eigen::VectorXd& y, Eigen::VectorXd& val,
                          Eigen::MatrixXd* jac) {
    const double d = y[1] - y[3];
    val[0] = d - br.angle_max;
    val[1] = br.angle_min - d;
    if (jac) {
      jac->setZero(val.size(), 4);
      (*jac)(0, 1) = 1;
      (*jac)(0, 3) = -1;
      (*jac)(1, 1) = -1;
      (*jac)(1, 3) = 1;
    }
    if (!br.thermally_limited()) return;
    const BranchFlows fl = branch_flows(c, y[0], y[1], y[2], y[3]);
    const double cap = br.s_max * br.s_max;
    val[2] = fl.p_f * fl.p_f + fl.q_f * fl.q_f - cap;
    val[3] = fl.p_t * fl.p_t + fl.q_t * fl.q_t - cap;
    if (jac) {
      const Eigen::Matrix4d J = flow_jacobian(c, y[0], y[1], y[2], y[3]);
      for (int i = 0; i < 4; ++i) {
        (*jac)(2, i) = 2 * fl.p_f * J(0, i) + 2 * fl.q_f * J(1, i);
        (*jac)(3, i) = 2 * fl.p_t * J(2, i) + 2 * fl.q_t * J(3, i);
      }
    }
  };

  Eigen::VectorXd y0(4);
  y0 << warm_start.v_f, warm_start.th_f, warm_start.v_t, warm_start.th_t;

  const nlp::Result res = nlp::solve(prob, y0);

  LineSolve out;
  out.status = res.status;
  const BranchFlows fl = branch_flows(c, res.x[0], res.x[1], res.x[2], res.x[3]);
  out.x.p_f = fl.p_f;
  out.x.q_f = fl.q_f;
  out.x.p_t = fl.p_t;
  out.x.q_t = fl.q_t;
  out.x.v_f = res.x[0];
  out.x.th_f = res.x[1];
  out.x.v_t = res.x[2];
  out.x.th_t = res.x[3];
  out.value = objective(res.x, nullptr, 1.0);
  return out;
}

CouplingTargets coupling_targets(const Network& net, const ComponentState& s) {
  const size_t nb = net.buses.size();
  // Per-bus aggregates at the given state: generator totals and the sum of
  // line-duplicate flows over incident ends.
  std::vector<double> gen_p(nb, 0), gen_q(nb, 0), flow_p(nb, 0), flow_q(nb, 0);
  for (size_t g = 0; g < net.generators.size(); ++g) {
    const int i = net.bus_index(net.generators[g].bus);
    gen_p[i] += s.gen[g].p;
    gen_q[i] += s.gen[g].q;
  }
  for (size_t i = 0; i < nb; ++i) {
    for (const BranchEnd& end : net.bus_branch_ends[i]) {
      const LineVars& lv = s.line[end.branch];
      flow_p[i] += end.at_from ? lv.p_f : lv.p_t;
      flow_q[i] += end.at_from ? lv.q_f : lv.q_t;
    }
  }

  CouplingTargets out;
  out.gen.resize(net.generators.size());
  for (size_t g = 0; g < net.generators.size(); ++g) {
    const int i = net.bus_index(net.generators[g].bus);
    const Bus& b = net.buses[i];
    const double v2 = s.bus[i].v * s.bus[i].v;
    out.gen[g].first = -(gen_p[i] - s.gen[g].p) + flow_p[i] +
                       b.g_shunt * v2 + b.p_load;
    out.gen[g].second = -(gen_q[i] - s.gen[g].q) + flow_q[i] -
                        b.b_shunt * v2 + b.q_load;
  }
  out.line.resize(net.branches.size());
  for (size_t l = 0; l < net.branches.size(); ++l) {
    const Branch& br = net.branches[l];
    const LineVars& lv = s.line[l];
    const int i = net.bus_index(br.from_bus);
    const int j = net.bus_index(br.to_bus);
    const double v2i = s.bus[i].v * s.bus[i].v;
    const double v2j = s.bus[j].v * s.bus[j].v;
    out.line[l].pc_f = -(flow_p[i] - lv.p_f) + gen_p[i] -
                       net.buses[i].p_load - net.buses[i].g_shunt * v2i;
    out.line[l].qc_f = -(flow_q[i] - lv.q_f) + gen_q[i] -
                       net.buses[i].q_load + net.buses[i].b_shunt * v2i;
    out.line[l].pc_t = -(flow_p[j] - lv.p_t) + gen_p[j] -
                       net.buses[j].p_load - net.buses[j].g_shunt * v2j;
    out.line[l].qc_t = -(flow_q[j] - lv.q_t) + gen_q[j] -
                       net.buses[j].q_load + net.buses[j].b_shunt * v2j;
  }
  return out;
}

double modified_dual_value(const Network& net, const MultiplierSet& lam,
                           const ComponentState& state,
                           const AlgoParams& params, int workers) {
  const bool a3 = params.variant == Variant::a3;
  const bool a1 = params.variant == Variant::a1;
  const std::optional<CouplingTargets> targets =
      a3 ? std::optional<CouplingTargets>(coupling_targets(net, state))
         : std::nullopt;

  double total = 0;
  for (size_t g = 0; g < net.generators.size(); ++g) {
    const Generator& gen = net.generators[g];
    const int i = net.bus_index(gen.bus);
    std::optional<std::pair<double, double>> tg;
    if (targets) tg = targets->gen[g];
    total += gen_subproblem(gen, lam.bus_p[i], lam.bus_q[i], state.gen[g],
                            params, tg)
                 .value;
  }

  const int nl = static_cast<int>(net.branches.size());
  std::vector<double> line_value(nl);
  detail::parallel_for(nl, detail::resolve_workers(workers), [&](int l) {
    const Branch& br = net.branches[l];
    const int i = net.bus_index(br.from_bus);
    const int j = net.bus_index(br.to_bus);
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
    line_value[l] = line_subproblem(br, branch_coeffs(br), local, tg,
                                    state.line[l], params, LineVars{})
                        .value;
  });
  for (int l = 0; l < nl; ++l) total += line_value[l];

  for (size_t i = 0; i < net.buses.size(); ++i) {
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
      if (!a1) {
        const LineVars& lv = state.line[l];
        local.dup_v.push_back(end.at_from ? lv.v_f : lv.v_t);
        local.dup_th.push_back(end.at_from ? lv.th_f : lv.th_t);
      }
    }
    total += bus_subproblem(net.buses[i], lam.bus_p[i], lam.bus_q[i], local,
                            state.bus[i], params)
                 .value;
  }
  return total;
}

}  // namespace opfdd
