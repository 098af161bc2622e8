// Component subproblems against independent oracles: dense grids and finite
// differences for the closed forms, a from-scratch modified-Lagrangian
// evaluation for the dual value, and hand-computed coupling targets.
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "opfdd/coordinator.hpp"
#include "opfdd/decomposition.hpp"
#include "opfdd/network.hpp"

using namespace opfdd;

namespace {

const std::string kData = OPFDD_DATA_DIR;

Network load9() { return parse_matpower_file(kData + "/case9.m"); }

// ---- independent objective formulas ---------------------------------------
// Written from the documented component Lagrangians, not from the library
// sources; value mismatches flag sign or penalty-shape regressions.

double gen_objective(const Generator& g, double lam_p, double lam_q,
                     const GenVars& prev, const AlgoParams& prm,
                     const std::optional<std::pair<double, double>>& tgt,
                     double p, double q) {
  double f = g.c2 * p * p + g.c1 * p + g.c0 + lam_p * p + lam_q * q +
             prm.nu / 2 * ((p - prev.p) * (p - prev.p) +
                           (q - prev.q) * (q - prev.q));
  if (tgt)
    f += prm.rho_pq * ((p - tgt->first) * (p - tgt->first) +
                       (q - tgt->second) * (q - tgt->second));
  return f;
}

double bus_objective(const Bus& b, double lam_p, double lam_q,
                     const BusLocal& local, const BusVars& prev,
                     const AlgoParams& prm, double v, double th) {
  double f = v * v * (-lam_p * b.g_shunt + lam_q * b.b_shunt) -
             (lam_p * b.p_load + lam_q * b.q_load);
  for (size_t j = 0; j < local.lam_v.size(); ++j)
    f += local.lam_v[j] * v + local.lam_th[j] * th;
  if (prm.variant == Variant::a1) {
    f += prm.nu / 2 *
         ((v - prev.v) * (v - prev.v) + (th - prev.th) * (th - prev.th));
  } else {
    for (size_t j = 0; j < local.lam_v.size(); ++j) {
      const double dv = v - local.dup_v[j];
      const double dth = th - local.dup_th[j];
      f += prm.rho_vth / 2 * (dv * dv + dth * dth);
    }
  }
  return f;
}

// y = (v_f, th_f, v_t, th_t); the four flows are functions of y.
double line_objective(const Branch& br, const LineLocal& lo,
                      const std::optional<FlowTargets>& tgt,
                      const LineVars& prev, const AlgoParams& prm,
                      const double y[4]) {
  const bool a1 = prm.variant == Variant::a1;
  const BranchFlows fl = branch_flows(branch_coeffs(br), y[0], y[1], y[2], y[3]);
  const double flow[4] = {fl.p_f, fl.q_f, fl.p_t, fl.q_t};
  const double lam_flow[4] = {lo.lam_p_i, lo.lam_q_i, lo.lam_p_j, lo.lam_q_j};
  const double prev_flow[4] = {prev.p_f, prev.q_f, prev.p_t, prev.q_t};
  const double lam_vth[4] = {lo.lam_v_f, lo.lam_th_f, lo.lam_v_t, lo.lam_th_t};
  const double prev_vth[4] = {prev.v_f, prev.th_f, prev.v_t, prev.th_t};
  const double anchor[4] = {lo.v_i, lo.th_i, lo.v_j, lo.th_j};
  const double tg[4] = {tgt ? tgt->pc_f : 0, tgt ? tgt->qc_f : 0,
                        tgt ? tgt->pc_t : 0, tgt ? tgt->qc_t : 0};
  double f = 0;
  for (int r = 0; r < 4; ++r) {
    f += -lam_flow[r] * flow[r];
    f += prm.nu * (flow[r] - prev_flow[r]) * (flow[r] - prev_flow[r]);
    if (tgt) f += prm.rho_pq / 2 * (flow[r] - tg[r]) * (flow[r] - tg[r]);
  }
  for (int i = 0; i < 4; ++i) {
    f += -lam_vth[i] * y[i];
    if (a1) f += prm.nu * (y[i] - prev_vth[i]) * (y[i] - prev_vth[i]);
    else f += prm.rho_vth / 2 * (y[i] - anchor[i]) * (y[i] - anchor[i]);
  }
  return f;
}

// Hand recomputation of the per-component coupling targets.
CouplingTargets targets_oracle(const Network& net, const ComponentState& s) {
  CouplingTargets t;
  const auto flow_p = [&](const BranchEnd& e) {
    return e.at_from ? s.line[e.branch].p_f : s.line[e.branch].p_t;
  };
  const auto flow_q = [&](const BranchEnd& e) {
    return e.at_from ? s.line[e.branch].q_f : s.line[e.branch].q_t;
  };
  for (size_t g = 0; g < net.generators.size(); ++g) {
    const int i = net.bus_index(net.generators[g].bus);
    const Bus& b = net.buses[net.bus_index(net.generators[g].bus)];
    const double v2 = s.bus[i].v * s.bus[i].v;
    double pc = b.g_shunt * v2 + b.p_load;
    double qc = -b.b_shunt * v2 + b.q_load;
    for (int h : net.bus_generators[i])
      if (h != static_cast<int>(g)) {
        pc -= s.gen[h].p;
        qc -= s.gen[h].q;
      }
    for (const BranchEnd& e : net.bus_branch_ends[i]) {
      pc += flow_p(e);
      qc += flow_q(e);
    }
    t.gen.push_back({pc, qc});
  }
  t.line.resize(net.branches.size());
  for (size_t l = 0; l < net.branches.size(); ++l) {
    for (const bool at_from : {true, false}) {
      const int i = net.bus_index(at_from ? net.branches[l].from_bus
                                          : net.branches[l].to_bus);
      const Bus& b = net.buses[i];
      const double v2 = s.bus[i].v * s.bus[i].v;
      double pc = -b.p_load - b.g_shunt * v2;
      double qc = -b.q_load + b.b_shunt * v2;
      for (int h : net.bus_generators[i]) {
        pc += s.gen[h].p;
        qc += s.gen[h].q;
      }
      for (const BranchEnd& e : net.bus_branch_ends[i])
        if (!(e.branch == static_cast<int>(l) && e.at_from == at_from)) {
          pc -= flow_p(e);
          qc -= flow_q(e);
        }
      if (at_from) {
        t.line[l].pc_f = pc;
        t.line[l].qc_f = qc;
      } else {
        t.line[l].pc_t = pc;
        t.line[l].qc_t = qc;
      }
    }
  }
  return t;
}

ComponentState random_state(const Network& net, std::mt19937& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ComponentState s = flat_component_state(net);
  for (auto& g : s.gen) {
    g.p += 0.2 * u(rng);
    g.q += 0.2 * u(rng);
  }
  for (auto& b : s.bus) {
    b.v = 1.0 + 0.04 * u(rng);
    b.th = 0.2 * u(rng);
  }
  for (size_t l = 0; l < s.line.size(); ++l) {
    LineVars& lv = s.line[l];
    lv.v_f = 1.0 + 0.04 * u(rng);
    lv.th_f = 0.2 * u(rng);
    lv.v_t = 1.0 + 0.04 * u(rng);
    lv.th_t = 0.2 * u(rng);
    const BranchFlows f = branch_flows(branch_coeffs(net.branches[l]), lv.v_f,
                                       lv.th_f, lv.v_t, lv.th_t);
    lv.p_f = f.p_f;
    lv.q_f = f.q_f;
    lv.p_t = f.p_t;
    lv.q_t = f.q_t;
  }
  return s;
}

MultiplierSet random_multipliers(const Network& net, std::mt19937& rng,
                                 double scale_bus, double scale_cons) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  MultiplierSet m = zero_multipliers(net);
  for (int i = 0; i < m.bus_p.size(); ++i) {
    m.bus_p[i] = scale_bus * u(rng);
    m.bus_q[i] = scale_bus * u(rng);
  }
  for (int l = 0; l < m.from_v.size(); ++l) {
    m.from_v[l] = scale_cons * u(rng);
    m.from_th[l] = scale_cons * u(rng);
    m.to_v[l] = scale_cons * u(rng);
    m.to_th[l] = scale_cons * u(rng);
  }
  return m;
}

}  // namespace

TEST_SUITE("decomposition") {

TEST_CASE("generator closed form beats a dense grid") {
  std::mt19937 rng(42);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int draw = 0; draw < 25; ++draw) {
    CAPTURE(draw);
    Generator g;
    g.p_min = 0.1;
    g.p_max = 0.1 + 2.4 * u(rng);
    g.q_min = -2.0;
    g.q_max = 2.0;
    g.c2 = 2000 * u(rng);
    g.c1 = -500 + 1000 * u(rng);
    g.c0 = 100;
    AlgoParams prm;
    prm.nu = 1 + 4000 * u(rng);
    prm.rho_pq = 1 + 1000 * u(rng);
    std::optional<std::pair<double, double>> tgt;
    switch (draw % 3) {
      case 0: prm.variant = Variant::a1; break;
      case 1: prm.variant = Variant::a2; break;
      default:
        prm.variant = Variant::a3;
        tgt = std::make_pair(-1 + 2 * u(rng), -1 + 2 * u(rng));
    }
    const GenVars prev{g.p_min + (g.p_max - g.p_min) * u(rng),
                       g.q_min + (g.q_max - g.q_min) * u(rng)};
    const double lam_p = -2000 + 4000 * u(rng);
    const double lam_q = -500 + 1000 * u(rng);

    const GenSolve got = gen_subproblem(g, lam_p, lam_q, prev, prm, tgt);

    CHECK(got.value ==
          doctest::Approx(gen_objective(g, lam_p, lam_q, prev, prm, tgt,
                                        got.x.p, got.x.q))
              .epsilon(1e-12));

    // The closed form can never be beaten on a dense sample of its own box.
    const int n = 20000;
    double best_p = 0, best_q = 0, best = 1e300;
    for (int i = 0; i <= n; ++i) {
      const double p = g.p_min + (g.p_max - g.p_min) * i / n;
      const double f = gen_objective(g, lam_p, lam_q, prev, prm, tgt, p, got.x.q);
      if (f < best) {
        best = f;
        best_p = p;
      }
    }
    CHECK(got.value <= best + 1e-9 * std::fabs(best));
    CHECK(std::fabs(got.x.p - best_p) <= 1.5 * (g.p_max - g.p_min) / n);
    best = 1e300;
    for (int i = 0; i <= n; ++i) {
      const double q = g.q_min + (g.q_max - g.q_min) * i / n;
      const double f = gen_objective(g, lam_p, lam_q, prev, prm, tgt, got.x.p, q);
      if (f < best) {
        best = f;
        best_q = q;
      }
    }
    CHECK(got.value <= best + 1e-9 * std::fabs(best));
    CHECK(std::fabs(got.x.q - best_q) <= 1.5 * (g.q_max - g.q_min) / n);
  }
}

TEST_CASE("generator degenerate and nonconvex edges") {
  Generator g;
  g.p_min = 0.0;
  g.p_max = 1.0;
  g.q_min = -1.0;
  g.q_max = 2.0;
  g.c2 = 100;
  g.c1 = 0;
  g.c0 = 0;
  AlgoParams prm;
  prm.variant = Variant::a1;
  prm.nu = 0;  // q part becomes linear

  GenVars prev{0.5, 0.25};
  // Positive slope pushes q to its lower bound, negative to the upper,
  // zero keeps the anchor.
  CHECK(gen_subproblem(g, 0, 5.0, prev, prm, {}).x.q == -1.0);
  CHECK(gen_subproblem(g, 0, -5.0, prev, prm, {}).x.q == 2.0);
  CHECK(gen_subproblem(g, 0, 0.0, prev, prm, {}).x.q == 0.25);

  g.c2 = 0;  // and with no curvature anywhere the p part is rejected
  CHECK_THROWS_AS(
      (void)gen_subproblem(g, 0, 0, prev, prm, {}), NonconvexQuadratic);
}

TEST_CASE("bus closed form is stationary and beats a local grid") {
  std::mt19937 rng(4242);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int tested = 0;
  for (int draw = 0; draw < 40 && tested < 20; ++draw) {
    CAPTURE(draw);
    Bus b;
    b.p_load = u(rng);
    b.q_load = 0.5 * u(rng);
    b.g_shunt = draw % 2 ? 0.0 : 0.3 * u(rng);
    b.b_shunt = draw % 3 ? 0.2 * u(rng) : -0.2 * u(rng);
    b.v_min = 0.9;
    b.v_max = 1.1;
    AlgoParams prm;
    const bool a1 = draw % 2 == 0;
    prm.variant = a1 ? Variant::a1 : Variant::a2;
    prm.nu = 10 + 400 * u(rng);
    prm.rho_vth = 50 + 450 * u(rng);
    const int ends = 1 + draw % 3;
    BusLocal local;
    for (int j = 0; j < ends; ++j) {
      local.lam_v.push_back(-5 + 10 * u(rng));
      local.lam_th.push_back(-5 + 10 * u(rng));
      local.dup_v.push_back(0.9 + 0.2 * u(rng));
      local.dup_th.push_back(-0.4 + 0.8 * u(rng));
    }
    const BusVars prev{0.9 + 0.2 * u(rng), -0.4 + 0.8 * u(rng)};
    const double lam_p = -50 + 100 * u(rng);
    const double lam_q = -50 + 100 * u(rng);

    // Skip draws the solver legitimately rejects (tested separately).
    BusSolve got;
    try {
      got = bus_subproblem(b, lam_p, lam_q, local, prev, prm);
    } catch (const NonCoerciveBus&) {
      continue;
    }
    ++tested;

    CHECK(got.value == doctest::Approx(bus_objective(b, lam_p, lam_q, local,
                                                     prev, prm, got.x.v,
                                                     got.x.th))
                           .epsilon(1e-12));

    // Exact stationarity of the separable quadratic at the solution.
    const double h = 1e-5;
    const auto f = [&](double v, double th) {
      return bus_objective(b, lam_p, lam_q, local, prev, prm, v, th);
    };
    const double dv =
        (f(got.x.v + h, got.x.th) - f(got.x.v - h, got.x.th)) / (2 * h);
    const double dth =
        (f(got.x.v, got.x.th + h) - f(got.x.v, got.x.th - h)) / (2 * h);
    CHECK(std::fabs(dv) < 1e-6 * std::max(1.0, std::fabs(got.value)));
    CHECK(std::fabs(dth) < 1e-6 * std::max(1.0, std::fabs(got.value)));

    // Grid window around the candidate: never beaten.
    const int n = 400;
    for (int i = 0; i <= n; ++i)
      for (int j = 0; j <= n; ++j) {
        const double v = got.x.v - 0.5 + 1.0 * i / n;
        const double th = got.x.th - 0.5 + 1.0 * j / n;
        if (f(v, th) < got.value - 1e-9) {
          CAPTURE(v);
          CAPTURE(th);
          REQUIRE(false);
        }
      }
  }
  CHECK(tested >= 20);
}

TEST_CASE("bus subproblem rejects non-coercive data") {
  Bus b;
  b.v_min = 0.9;
  b.v_max = 1.1;
  BusLocal local;
  local.lam_v = {0.0};
  local.lam_th = {0.0};
  local.dup_v = {1.0};
  local.dup_th = {0.0};
  AlgoParams prm;

  prm.variant = Variant::a1;
  prm.nu = 0;  // no curvature at all
  CHECK_THROWS_AS(
      (void)bus_subproblem(b, 0, 0, local, BusVars{}, prm), NonCoerciveBus);

  prm.variant = Variant::a2;
  prm.rho_vth = 100;
  b.g_shunt = 0.05;
  // 2 * (-lam_p g_sh) = -1000 overwhelms rho * ends = 100.
  CHECK_THROWS_AS(
      (void)bus_subproblem(b, 10000, 0, local, BusVars{}, prm), NonCoerciveBus);
}

TEST_CASE("line subproblem: consistency, stationarity, local dominance") {
  std::mt19937 rng(777);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int draw = 0; draw < 8; ++draw) {
    CAPTURE(draw);
    Branch br;
    br.r = 0.25 * u(rng);
    br.x = 0.05 + 0.3 * u(rng);
    br.b_ch = 0.3 * u(rng);
    br.tap = draw % 2 ? 1.0 : 0.95 + 0.1 * u(rng);
    br.shift = draw % 3 ? 0.0 : -0.1 + 0.2 * u(rng);
    br.s_max = draw % 4 == 3 ? 0.0 : 2.0;  // mostly limited, sometimes not
    br.angle_min = -0.6;
    br.angle_max = 0.6;

    AlgoParams prm;
    prm.variant = draw % 2 ? Variant::a3 : Variant::a2;
    prm.nu = 200 + 400 * u(rng);
    prm.rho_vth = 2000 + 4000 * u(rng);
    prm.rho_pq = 100 + 200 * u(rng);

    LineLocal lo;
    lo.lam_p_i = -80 + 160 * u(rng);
    lo.lam_q_i = -80 + 160 * u(rng);
    lo.lam_p_j = -80 + 160 * u(rng);
    lo.lam_q_j = -80 + 160 * u(rng);
    lo.lam_v_f = -40 + 80 * u(rng);
    lo.lam_th_f = -40 + 80 * u(rng);
    lo.lam_v_t = -40 + 80 * u(rng);
    lo.lam_th_t = -40 + 80 * u(rng);
    lo.v_i = 0.97 + 0.06 * u(rng);
    lo.th_i = -0.1 + 0.2 * u(rng);
    lo.v_j = 0.97 + 0.06 * u(rng);
    lo.th_j = -0.1 + 0.2 * u(rng);
    lo.v_min_f = 0.94;
    lo.v_max_f = 1.06;
    lo.v_min_t = 0.94;
    lo.v_max_t = 1.06;
    std::optional<FlowTargets> tgt;
    if (prm.variant == Variant::a3)
      tgt = FlowTargets{-1 + 2 * u(rng), -1 + 2 * u(rng), -1 + 2 * u(rng),
                        -1 + 2 * u(rng)};
    LineVars prev;  // flat

    const LineSolve got =
        line_subproblem(br, branch_coeffs(br), lo, tgt, prev, prm, LineVars{});
    CHECK(got.status == nlp::Status::converged);

    // Returned flows are exactly the flow equations of the duplicates.
    const BranchFlows fl = branch_flows(branch_coeffs(br), got.x.v_f,
                                        got.x.th_f, got.x.v_t, got.x.th_t);
    CHECK(got.x.p_f == doctest::Approx(fl.p_f).epsilon(1e-14));
    CHECK(got.x.q_f == doctest::Approx(fl.q_f).epsilon(1e-14));
    CHECK(got.x.p_t == doctest::Approx(fl.p_t).epsilon(1e-14));
    CHECK(got.x.q_t == doctest::Approx(fl.q_t).epsilon(1e-14));

    // Value re-evaluates from scratch.
    const double y[4] = {got.x.v_f, got.x.th_f, got.x.v_t, got.x.th_t};
    CHECK(got.value ==
          doctest::Approx(line_objective(br, lo, tgt, prev, prm, y))
              .epsilon(1e-8));

    // Feasibility of the solution.
    CHECK(got.x.v_f >= lo.v_min_f - 1e-8);
    CHECK(got.x.v_f <= lo.v_max_f + 1e-8);
    CHECK(got.x.th_f - got.x.th_t >= br.angle_min - 1e-7);
    CHECK(got.x.th_f - got.x.th_t <= br.angle_max + 1e-7);
    if (br.thermally_limited()) {
      const double cap = br.s_max * br.s_max;
      CHECK(fl.p_f * fl.p_f + fl.q_f * fl.q_f <= cap + 1e-6);
      CHECK(fl.p_t * fl.p_t + fl.q_t * fl.q_t <= cap + 1e-6);
    }

    // No feasible random sample does better (strong penalties keep the
    // reduced objective unimodal at these draws).
    std::uniform_real_distribution<double> uv(0.94, 1.06);
    std::uniform_real_distribution<double> uth(-0.5, 0.5);
    for (int s = 0; s < 2000; ++s) {
      double t[4] = {uv(rng), uth(rng), uv(rng), uth(rng)};
      if (t[1] - t[3] < br.angle_min || t[1] - t[3] > br.angle_max) continue;
      if (br.thermally_limited()) {
        const BranchFlows tf = branch_flows(branch_coeffs(br), t[0], t[1],
                                            t[2], t[3]);
        const double cap = br.s_max * br.s_max;
        if (tf.p_f * tf.p_f + tf.q_f * tf.q_f > cap ||
            tf.p_t * tf.p_t + tf.q_t * tf.q_t > cap)
          continue;
      }
      const double fv = line_objective(br, lo, tgt, prev, prm, t);
      CHECK(got.value <= fv + 1e-7 * std::max(1.0, std::fabs(fv)));
    }
  }
}

TEST_CASE("coupling targets match the hand formulas on case9") {
  const Network net = load9();
  std::mt19937 rng(1312);
  const ComponentState s = random_state(net, rng);
  const CouplingTargets lib = coupling_targets(net, s);
  const CouplingTargets mine = targets_oracle(net, s);
  REQUIRE(lib.gen.size() == mine.gen.size());
  REQUIRE(lib.line.size() == mine.line.size());
  for (size_t g = 0; g < lib.gen.size(); ++g) {
    CHECK(lib.gen[g].first == doctest::Approx(mine.gen[g].first).epsilon(1e-12));
    CHECK(lib.gen[g].second ==
          doctest::Approx(mine.gen[g].second).epsilon(1e-12));
  }
  for (size_t l = 0; l < lib.line.size(); ++l) {
    CHECK(lib.line[l].pc_f == doctest::Approx(mine.line[l].pc_f).epsilon(1e-12));
    CHECK(lib.line[l].qc_f == doctest::Approx(mine.line[l].qc_f).epsilon(1e-12));
    CHECK(lib.line[l].pc_t == doctest::Approx(mine.line[l].pc_t).epsilon(1e-12));
    CHECK(lib.line[l].qc_t == doctest::Approx(mine.line[l].qc_t).epsilon(1e-12));
  }
}

TEST_CASE("modified dual equals the from-scratch Lagrangian at the argmins") {
  const Network net = load9();
  std::mt19937 rng(5150);
  const ComponentState state = random_state(net, rng);
  const MultiplierSet lam = random_multipliers(net, rng, 200.0, 20.0);

  for (const Variant variant : {Variant::a1, Variant::a2, Variant::a3}) {
    CAPTURE(static_cast<int>(variant));
    AlgoParams prm;
    prm.variant = variant;
    prm.nu = 1000;
    prm.rho_pq = 100;
    prm.rho_vth = 10000;

    const bool a3 = variant == Variant::a3;
    const CouplingTargets tgts =
        a3 ? targets_oracle(net, state) : CouplingTargets{};

    double total = 0;
    for (size_t g = 0; g < net.generators.size(); ++g) {
      const Generator& gen = net.generators[g];
      const int i = net.bus_index(gen.bus);
      std::optional<std::pair<double, double>> tg;
      if (a3) tg = tgts.gen[g];
      const GenSolve gs = gen_subproblem(gen, lam.bus_p[i], lam.bus_q[i],
                                         state.gen[g], prm, tg);
      const double mine = gen_objective(gen, lam.bus_p[i], lam.bus_q[i],
                                        state.gen[g], prm, tg, gs.x.p, gs.x.q);
      CHECK(gs.value == doctest::Approx(mine).epsilon(1e-10));
      total += mine;
    }
    for (size_t l = 0; l < net.branches.size(); ++l) {
      const Branch& br = net.branches[l];
      const int i = net.bus_index(br.from_bus);
      const int j = net.bus_index(br.to_bus);
      LineLocal lo;
      lo.lam_p_i = lam.bus_p[i];
      lo.lam_q_i = lam.bus_q[i];
      lo.lam_p_j = lam.bus_p[j];
      lo.lam_q_j = lam.bus_q[j];
      lo.lam_v_f = lam.from_v[l];
      lo.lam_th_f = lam.from_th[l];
      lo.lam_v_t = lam.to_v[l];
      lo.lam_th_t = lam.to_th[l];
      lo.v_i = state.bus[i].v;
      lo.th_i = state.bus[i].th;
      lo.v_j = state.bus[j].v;
      lo.th_j = state.bus[j].th;
      lo.v_min_f = net.buses[i].v_min;
      lo.v_max_f = net.buses[i].v_max;
      lo.v_min_t = net.buses[j].v_min;
      lo.v_max_t = net.buses[j].v_max;
      std::optional<FlowTargets> tg;
      if (a3) tg = tgts.line[l];
      const LineSolve ls = line_subproblem(br, branch_coeffs(br), lo, tg,
                                           state.line[l], prm, LineVars{});
      const double y[4] = {ls.x.v_f, ls.x.th_f, ls.x.v_t, ls.x.th_t};
      const double mine = line_objective(br, lo, tg, state.line[l], prm, y);
      CHECK(ls.value == doctest::Approx(mine).epsilon(1e-8));
      total += mine;
    }
    for (size_t i = 0; i < net.buses.size(); ++i) {
      BusLocal lo;
      for (const BranchEnd& e : net.bus_branch_ends[i]) {
        lo.lam_v.push_back(e.at_from ? lam.from_v[e.branch]
                                     : lam.to_v[e.branch]);
        lo.lam_th.push_back(e.at_from ? lam.from_th[e.branch]
                                      : lam.to_th[e.branch]);
        if (variant != Variant::a1) {
          const LineVars& lv = state.line[e.branch];
          lo.dup_v.push_back(e.at_from ? lv.v_f : lv.v_t);
          lo.dup_th.push_back(e.at_from ? lv.th_f : lv.th_t);
        }
      }
      const BusSolve bs = bus_subproblem(net.buses[i], lam.bus_p[i],
                                         lam.bus_q[i], lo, state.bus[i], prm);
      const double mine = bus_objective(net.buses[i], lam.bus_p[i],
                                        lam.bus_q[i], lo, state.bus[i], prm,
                                        bs.x.v, bs.x.th);
      CHECK(bs.value == doctest::Approx(mine).epsilon(1e-10));
      total += mine;
    }

    const double dual = modified_dual_value(net, lam, state, prm, 1);
    CHECK(dual == doctest::Approx(total).epsilon(1e-8));
  }
}

}  // TEST_SUITE
