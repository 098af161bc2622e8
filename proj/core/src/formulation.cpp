#include "opfdd/formulation.hpp"

#include <cmath>

namespace opfdd {

BranchFlows branch_flows(const BranchCoeffs& c, double v_f, double th_f,
                         double v_t, double th_t) {
  const double d = th_f - th_t;
  const double cs = std::cos(d);
  const double sn = std::sin(d);
  const double vv = v_f * v_t;
  BranchFlows out;
  out.p_f = c.g_c_ff * v_f * v_f - c.g_ff * vv * cs + c.b_ff * vv * sn;
  out.q_f = c.b_c_ff * v_f * v_f - c.b_ff * vv * cs - c.g_ff * vv * sn;
  // cos(-d) = cos(d), sin(-d) = -sin(d)
  out.p_t = c.g_c_tt * v_t * v_t - c.g_tt * vv * cs - c.b_tt * vv * sn;
  out.q_t = c.b_c_tt * v_t * v_t - c.b_tt * vv * cs + c.g_tt * vv * sn;
  return out;
}

Eigen::Matrix4d flow_jacobian(const BranchCoeffs& c, double v_f, double th_f,
                              double v_t, double th_t) {
  const double d = th_f - th_t;
  const double cs = std::cos(d);
  const double sn = std::sin(d);
  const double vv = v_f * v_t;
  Eigen::Matrix4d J;
  // rows: p_f, q_f, p_t, q_t; columns: v_f, th_f, v_t, th_t
  J(0, 0) = 2 * c.g_c_ff * v_f - c.g_ff * v_t * cs + c.b_ff * v_t * sn;
  J(0, 1) = c.g_ff * vv * sn + c.b_ff * vv * cs;
  J(0, 2) = -c.g_ff * v_f * cs + c.b_ff * v_f * sn;
  J(0, 3) = -J(0, 1);

  J(1, 0) = 2 * c.b_c_ff * v_f - c.b_ff * v_t * cs - c.g_ff * v_t * sn;
  J(1, 1) = c.b_ff * vv * sn - c.g_ff * vv * cs;
  J(1, 2) = -c.b_ff * v_f * cs - c.g_ff * v_f * sn;
  J(1, 3) = -J(1, 1);

  J(2, 0) = -c.g_tt * v_t * cs - c.b_tt * v_t * sn;
  J(2, 1) = c.g_tt * vv * sn - c.b_tt * vv * cs;
  J(2, 2) = 2 * c.g_c_tt * v_t - c.g_tt * v_f * cs - c.b_tt * v_f * sn;
  J(2, 3) = -J(2, 1);

  J(3, 0) = -c.b_tt * v_t * cs + c.g_tt * v_t * sn;
  J(3, 1) = c.b_tt * vv * sn + c.g_tt * vv * cs;
  J(3, 2) = 2 * c.b_c_tt * v_t - c.b_tt * v_f * cs + c.g_tt * v_f * sn;
  J(3, 3) = -J(3, 1);
  return J;
}

FlowState flat_start(const Network& net) {
  FlowState s;
  const auto nb = static_cast<Eigen::Index>(net.buses.size());
  const auto ng = static_cast<Eigen::Index>(net.generators.size());
  s.v = Eigen::VectorXd::Ones(nb);
  s.theta = Eigen::VectorXd::Zero(nb);
  s.p_g.resize(ng);
  s.q_g.resize(ng);
  for (Eigen::Index g = 0; g < ng; ++g) {
    s.p_g[g] = 0.5 * (net.generators[g].p_min + net.generators[g].p_max);
    s.q_g[g] = 0.5 * (net.generators[g].q_min + net.generators[g].q_max);
  }
  refresh_flows(net, s);
  return s;
}

void refresh_flows(const Network& net, FlowState& s) {
  const auto nl = static_cast<Eigen::Index>(net.branches.size());
  s.p_f.resize(nl);
  s.q_f.resize(nl);
  s.p_t.resize(nl);
  s.q_t.resize(nl);
  for (Eigen::Index l = 0; l < nl; ++l) {
    const Branch& br = net.branches[l];
    const int f = net.bus_index(br.from_bus);
    const int t = net.bus_index(br.to_bus);
    const BranchFlows fl = branch_flows(branch_coeffs(br), s.v[f], s.theta[f],
                                        s.v[t], s.theta[t]);
    s.p_f[l] = fl.p_f;
    s.q_f[l] = fl.q_f;
    s.p_t[l] = fl.p_t;
    s.q_t[l] = fl.q_t;
  }
}

BalanceResiduals balance_residuals(const Network& net, const FlowState& s) {
  const auto nb = static_cast<Eigen::Index>(net.buses.size());
  BalanceResiduals r;
  r.p = Eigen::VectorXd::Zero(nb);
  r.q = Eigen::VectorXd::Zero(nb);
  std::vector<BranchFlows> flows(net.branches.size());
  for (size_t l = 0; l < net.branches.size(); ++l) {
    const Branch& br = net.branches[l];
    const int f = net.bus_index(br.from_bus);
    const int t = net.bus_index(br.to_bus);
    flows[l] = branch_flows(branch_coeffs(br), s.v[f], s.theta[f], s.v[t],
                            s.theta[t]);
  }
  for (Eigen::Index i = 0; i < nb; ++i) {
    const Bus& b = net.buses[i];
    double rp = -b.p_load - b.g_shunt * s.v[i] * s.v[i];
    double rq = -b.q_load + b.b_shunt * s.v[i] * s.v[i];
    for (int g : net.bus_generators[i]) {
      rp += s.p_g[g];
      rq += s.q_g[g];
    }
    for (const BranchEnd& end : net.bus_branch_ends[i]) {
      const BranchFlows& fl = flows[end.branch];
      rp -= end.at_from ? fl.p_f : fl.p_t;
      rq -= end.at_from ? fl.q_f : fl.q_t;
    }
    r.p[i] = rp;
    r.q[i] = rq;
  }
  return r;
}

double generation_cost(const Network& net, const Eigen::VectorXd& p_g) {
  double cost = 0;
  for (size_t g = 0; g < net.generators.size(); ++g) {
    const Generator& gen = net.generators[g];
    const double p = p_g[static_cast<Eigen::Index>(g)];
    cost += (gen.c2 * p + gen.c1) * p + gen.c0;
  }
  return cost;
}

namespace {

// Variable layout of the centralized NLP:
//   [ v (nb) | theta (nb) | p_g (ng) | q_g (ng) ]
struct Layout {
  int nb = 0, ng = 0, nl = 0;
  int v(int i) const { return i; }
  int th(int i) const { return nb + i; }
  int p(int g) const { return 2 * nb + g; }
  int q(int g) const { return 2 * nb + ng + g; }
  int n() const { return 2 * nb + 2 * ng; }
};

}  // namespace

CentralizedResult solve_centralized(const Network& net,
                                    const CentralizedOptions& opts) {
  return solve_centralized(net, flat_start(net), opts);
}

CentralizedResult solve_centralized(const Network& net, const FlowState& start,
                                    const CentralizedOptions& opts) {
  Layout lay;
  lay.nb = static_cast<int>(net.buses.size());
  lay.ng = static_cast<int>(net.generators.size());
  lay.nl = static_cast<int>(net.branches.size());

  // Angle reference: the lowest-numbered generator bus gets theta = 0 via
  // equal bounds (any choice only rotates the solution; cost is invariant).
  int ref_bus_id = net.generators.front().bus;
  for (const Generator& g : net.generators) ref_bus_id = std::min(ref_bus_id, g.bus);
  const int ref = net.bus_index(ref_bus_id);

  nlp::Problem prob;
  prob.n = lay.n();
  prob.lower.resize(prob.n);
  prob.upper.resize(prob.n);
  for (int i = 0; i < lay.nb; ++i) {
    prob.lower[lay.v(i)] = net.buses[i].v_min;
    prob.upper[lay.v(i)] = net.buses[i].v_max;
    prob.lower[lay.th(i)] = i == ref ? 0.0 : -nlp::kInf;
    prob.upper[lay.th(i)] = i == ref ? 0.0 : nlp::kInf;
  }
  for (int g = 0; g < lay.ng; ++g) {
    prob.lower[lay.p(g)] = net.generators[g].p_min;
    prob.upper[lay.p(g)] = net.generators[g].p_max;
    prob.lower[lay.q(g)] = net.generators[g].q_min;
    prob.upper[lay.q(g)] = net.generators[g].q_max;
  }

  // The engine works on absolute tolerances; normalize the objective so its
  // gradient is O(1) regardless of the $-scale of the cost data.
  double grad_scale = 1.0;
  for (const Generator& g : net.generators)
    grad_scale = std::max(grad_scale,
                          2 * g.c2 * std::max(std::abs(g.p_max),
                                              std::abs(g.p_min)) +
                              std::abs(g.c1));
  const double obj_scale = 1.0 / grad_scale;

  prob.objective = [&net, lay, obj_scale](const Eigen::VectorXd& x,
                                          Eigen::VectorXd* grad) {
    double f = 0;
    if (grad) grad->setZero(x.size());
    for (int g = 0; g < lay.ng; ++g) {
      const Generator& gen = net.generators[g];
      const double p = x[lay.p(g)];
      f += (gen.c2 * p + gen.c1) * p + gen.c0;
      if (grad) (*grad)[lay.p(g)] = (2 * gen.c2 * p + gen.c1) * obj_scale;
    }
    return f * obj_scale;
  };

  std::vector<BranchCoeffs> coeffs(net.branches.size());
  for (size_t l = 0; l < net.branches.size(); ++l)
    coeffs[l] = branch_coeffs(net.branches[l]);

  // Equalities: the 2*nb power-balance rows (p block then q block).
  prob.n_eq = 2 * lay.nb;
  prob.equalities = [&net, lay, &coeffs](const Eigen::VectorXd& x,
                                          Eigen::VectorXd& val,
                                          Eigen::MatrixXd* jac) {
    val.setZero(2 * lay.nb);
    if (jac) jac->setZero(2 * lay.nb, x.size());
    for (int i = 0; i < lay.nb; ++i) {
      const Bus& b = net.buses[i];
      const double vi = x[lay.v(i)];
      val[i] = -b.p_load - b.g_shunt * vi * vi;
      val[lay.nb + i] = -b.q_load + b.b_shunt * vi * vi;
      if (jac) {
        (*jac)(i, lay.v(i)) -= 2 * b.g_shunt * vi;
        (*jac)(lay.nb + i, lay.v(i)) += 2 * b.b_shunt * vi;
      }
    }
    for (int g = 0; g < lay.ng; ++g) {
      const int i = net.bus_index(net.generators[g].bus);
      val[i] += x[lay.p(g)];
      val[lay.nb + i] += x[lay.q(g)];
      if (jac) {
        (*jac)(i, lay.p(g)) += 1;
        (*jac)(lay.nb + i, lay.q(g)) += 1;
      }
    }
    for (int l = 0; l < lay.nl; ++l) {
      const Branch& br = net.branches[l];
      const int f = net.bus_index(br.from_bus);
      const int t = net.bus_index(br.to_bus);
      const BranchFlows fl = branch_flows(coeffs[l], x[lay.v(f)],
                                          x[lay.th(f)], x[lay.v(t)],
                                          x[lay.th(t)]);
      val[f] -= fl.p_f;
      val[lay.nb + f] -= fl.q_f;
      val[t] -= fl.p_t;
      val[lay.nb + t] -= fl.q_t;
      if (jac) {
        const Eigen::Matrix4d J = flow_jacobian(coeffs[l], x[lay.v(f)],
                                                x[lay.th(f)], x[lay.v(t)],
                                                x[lay.th(t)]);
        const int cols[4] = {lay.v(f), lay.th(f), lay.v(t), lay.th(t)};
        const int rows[4] = {f, lay.nb + f, t, lay.nb + t};
        for (int rr = 0; rr < 4; ++rr)
          for (int cc = 0; cc < 4; ++cc)
            (*jac)(rows[rr], cols[cc]) -= J(rr, cc);
      }
    }
  };

  // Inequalities: per-branch angle window, plus squared thermal limits on
  // rated branches.
  int n_ineq = 0;
  for (const Branch& br : net.branches)
    n_ineq += 2 + (br.thermally_limited() ? 2 : 0);
  prob.n_ineq = n_ineq;
  prob.inequalities = [&net, lay, &coeffs](const Eigen::VectorXd& x,
                                            Eigen::VectorXd& val,
                                            Eigen::MatrixXd* jac) {
    int row = 0;
    val.setZero(val.size());
    if (jac) jac->setZero(jac->rows(), x.size());
    for (int l = 0; l < lay.nl; ++l) {
      const Branch& br = net.branches[l];
      const int f = net.bus_index(br.from_bus);
      const int t = net.bus_index(br.to_bus);
      const double d = x[lay.th(f)] - x[lay.th(t)];
      val[row] = d - br.angle_max;
      val[row + 1] = br.angle_min - d;
      if (jac) {
        (*jac)(row, lay.th(f)) = 1;
        (*jac)(row, lay.th(t)) = -1;
        (*jac)(row + 1, lay.th(f)) = -1;
        (*jac)(row + 1, lay.th(t)) = 1;
      }
      row += 2;
      if (!br.thermally_limited()) continue;
      const double vf = x[lay.v(f)], thf = x[lay.th(f)];
      const double vt = x[lay.v(t)], tht = x[lay.th(t)];
      const BranchFlows fl = branch_flows(coeffs[l], vf, thf, vt, tht);
      const double cap = br.s_max * br.s_max;
      val[row] = fl.p_f * fl.p_f + fl.q_f * fl.q_f - cap;
      val[row + 1] = fl.p_t * fl.p_t + fl.q_t * fl.q_t - cap;
      if (jac) {
        const Eigen::Matrix4d J = flow_jacobian(coeffs[l], vf, thf, vt, tht);
        const int cols[4] = {lay.v(f), lay.th(f), lay.v(t), lay.th(t)};
        for (int cc = 0; cc < 4; ++cc) {
          (*jac)(row, cols[cc]) =
              2 * fl.p_f * J(0, cc) + 2 * fl.q_f * J(1, cc);
          (*jac)(row + 1, cols[cc]) =
              2 * fl.p_t * J(2, cc) + 2 * fl.q_t * J(3, cc);
        }
      }
      row += 2;
    }
  };

  Eigen::VectorXd x0(prob.n);
  for (int i = 0; i < lay.nb; ++i) {
    x0[lay.v(i)] = start.v[i];
    x0[lay.th(i)] = start.theta[i];
  }
  for (int g = 0; g < lay.ng; ++g) {
    x0[lay.p(g)] = start.p_g[g];
    x0[lay.q(g)] = start.q_g[g];
  }

  nlp::Options nopts;
  nopts.tol = opts.tol;
  // The scaled objective has O(1) gradients, so first-order stationarity at
  // 1e-4 bounds the relative cost error by roughly its square; feasibility
  // keeps the tight tolerance.
  nopts.stat_tol = std::max(opts.tol, 1e-4);
  nopts.max_outer = opts.max_outer;
  nopts.max_inner = opts.max_inner;
  const nlp::Result res = nlp::solve(prob, x0, nopts);
  if (res.status == nlp::Status::max_iterations)
    throw SolverDiverged("centralized solve exhausted iterations (residual " +
                         std::to_string(res.kkt_residual) + ")");

  CentralizedResult out;
  out.state.v.resize(lay.nb);
  out.state.theta.resize(lay.nb);
  out.state.p_g.resize(lay.ng);
  out.state.q_g.resize(lay.ng);
  for (int i = 0; i < lay.nb; ++i) {
    out.state.v[i] = res.x[lay.v(i)];
    out.state.theta[i] = res.x[lay.th(i)];
  }
  for (int g = 0; g < lay.ng; ++g) {
    out.state.p_g[g] = res.x[lay.p(g)];
    out.state.q_g[g] = res.x[lay.q(g)];
  }
  refresh_flows(net, out.state);
  out.cost = generation_cost(net, out.state.p_g);
  out.status = res.status;
  out.kkt_residual = res.kkt_residual;
  out.ref_bus = ref;
  return out;
}

}  // namespace opfdd
