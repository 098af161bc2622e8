// Two-variable consensus toys: exact dual geometry, Danskin subgradients,
// zero modified-duality-gap, and frozen iteration counts for the penalty
// and proximal drivers.
#include <cmath>
#include <random>

#include "doctest.h"
#include "opfdd/toylab.hpp"

using namespace opfdd::toy;

namespace {

// Kink locator: bisect on the sign of the dual subgradient x1* - x2*.
double bisect_kink(const Problem& p, double lo, double hi) {
  auto g = [&](double lam) {
    const DualEval d = dual_exact(p, lam, 0);
    REQUIRE(d.bounded);
    REQUIRE(!d.argmins.empty());
    return d.argmins.front().x1 - d.argmins.front().x2;
  };
  REQUIRE(g(lo) > 0);
  REQUIRE(g(hi) < 0);
  while (hi - lo > 1e-9) {
    const double mid = (lo + hi) / 2;
    (g(mid) > 0 ? lo : hi) = mid;
  }
  return (lo + hi) / 2;
}

}  // namespace

TEST_SUITE("toylab") {

TEST_CASE("consensus minima of both toys") {
  const Problem a = problem_a();
  const double xm = std::sqrt(std::log(2.0) / 2.0);
  const auto ma = consensus_minima(a);
  REQUIRE(ma.size() == 2);
  CHECK(ma[0].x == doctest::Approx(-xm).epsilon(1e-6));
  CHECK(ma[0].value == doctest::Approx(1.819397708).epsilon(1e-9));
  CHECK(ma[1].x == doctest::Approx(xm).epsilon(1e-6));
  CHECK(ma[1].value == doctest::Approx(1.960820257).epsilon(1e-9));
  // Agreement with a direct evaluation of f on the consensus line.
  CHECK(ma[0].value ==
        doctest::Approx(a.f1(-xm) + a.f2(-xm)).epsilon(1e-10));

  const auto mb = consensus_minima(problem_b());
  REQUIRE(mb.size() == 2);
  CHECK(mb[0].x == doctest::Approx(2.5).epsilon(1e-6));
  CHECK(mb[0].value == doctest::Approx(-5.25).epsilon(1e-9));
  CHECK(mb[1].x == doctest::Approx(-0.5).epsilon(1e-5));
  CHECK(mb[1].value == doctest::Approx(0.75).epsilon(1e-9));
}

TEST_CASE("classical dual of toy A: kink location, value, multiplicity") {
  const Problem a = problem_a();
  // Coarse-to-fine grid maximization.
  double best = -1e300, bl = 0;
  for (double lam = -0.5; lam <= 1.0 + 1e-12; lam += 1e-3) {
    const double d = dual_exact(a, lam, 0).value;
    if (d > best) {
      best = d;
      bl = lam;
    }
  }
  double fine = -1e300, fl = 0;
  for (double lam = bl - 2e-3; lam <= bl + 2e-3 + 1e-12; lam += 1e-4) {
    const double d = dual_exact(a, lam, 0).value;
    if (d > fine) {
      fine = d;
      fl = lam;
    }
  }
  CHECK(fl == doctest::Approx(0.1201).epsilon(2e-3));
  CHECK(fine == doctest::Approx(1.766994).epsilon(1e-5));

  // The maximum sits at a kink: refine by bisection on the subgradient sign
  // and observe the argmin tie there.
  const double kink = bisect_kink(a, fl - 4e-4, fl + 4e-4);
  CHECK(kink == doctest::Approx(0.120113253).epsilon(1e-6));
  const DualEval at = dual_exact(a, kink, 0);
  CHECK(at.value == doctest::Approx(1.766997011).epsilon(1e-7));
  REQUIRE(at.argmins.size() >= 2);
  // The tie is in the bounded block: the two argmins disagree in x2 only.
  CHECK(at.argmins[0].x2 == doctest::Approx(-0.588705).epsilon(1e-4));
  CHECK(at.argmins[1].x2 == doctest::Approx(0.588705).epsilon(1e-4));
  CHECK(at.argmins[0].x1 == doctest::Approx(at.argmins[1].x1).epsilon(1e-6));

  // Classical duality gap stays open: D* < p*.
  CHECK(at.value < 1.819397708 - 0.05);
}

TEST_CASE("classical dual of toy B is unbounded for every multiplier") {
  const Problem b = problem_b();
  for (const double lam : {-5.0, -3.0, -1.0, 0.0, 0.5, 1.0, 3.0, 10.0}) {
    CAPTURE(lam);
    const DualEval d = dual_exact(b, lam, 0);
    CHECK(!d.bounded);
  }
}

TEST_CASE("Danskin: dual argmins give supporting hyperplanes") {
  std::mt19937 rng(99);
  const Problem a = problem_a();
  const Problem b = problem_b();
  const auto supports = [&](const Problem& p, double rho, double lo,
                            double hi, int pairs) {
    std::uniform_real_distribution<double> u(lo, hi);
    for (int t = 0; t < pairs; ++t) {
      const double l1 = u(rng), l2 = u(rng);
      const DualEval d1 = dual_exact(p, l1, rho);
      const DualEval d2 = dual_exact(p, l2, rho);
      REQUIRE(d1.bounded);
      REQUIRE(d2.bounded);
      const double g = d1.argmins.front().x1 - d1.argmins.front().x2;
      CAPTURE(rho);
      CAPTURE(l1);
      CAPTURE(l2);
      CHECK(d2.value <= d1.value + g * (l2 - l1) + 1e-6);
    }
  };
  supports(a, 0, -1.0, 1.5, 100);
  supports(a, 10, -1.0, 1.5, 15);
  supports(b, 10, 0.0, 6.0, 10);
}

TEST_CASE("dual functions are concave along sampled chords") {
  std::mt19937 rng(1234);
  const auto midpoint_concave = [&](const Problem& p, double rho, double lo,
                                    double hi, int pairs) {
    std::uniform_real_distribution<double> u(lo, hi);
    for (int t = 0; t < pairs; ++t) {
      const double l1 = u(rng), l2 = u(rng);
      const double dm = dual_exact(p, (l1 + l2) / 2, rho).value;
      const double d1 = dual_exact(p, l1, rho).value;
      const double d2 = dual_exact(p, l2, rho).value;
      CAPTURE(rho);
      CAPTURE(l1);
      CAPTURE(l2);
      CHECK(dm >= (d1 + d2) / 2 - 1e-6);
    }
  };
  midpoint_concave(problem_a(), 0, -1.0, 1.5, 200);
  midpoint_concave(problem_a(), 10, -1.0, 1.5, 12);
  midpoint_concave(problem_b(), 10, 0.0, 6.0, 8);
}

TEST_CASE("penalized dual closes the duality gap") {
  const Problem a = problem_a();
  const double p_star = 1.819397708;
  // Weak duality holds for every sampled multiplier...
  for (double lam = -1.0; lam <= 1.5 + 1e-12; lam += 0.05) {
    CAPTURE(lam);
    CHECK(dual_exact(a, lam, 10).value <= p_star + 1e-6);
  }
  // ...and the gap closes at the consensus-stationarity multiplier, where the
  // classical dual was 0.052 short.
  CHECK(dual_exact(a, 0.848528, 10).value ==
        doctest::Approx(p_star).epsilon(1e-6));
  CHECK(dual_exact(a, 0.848528, 50).value ==
        doctest::Approx(p_star).epsilon(1e-6));

  const Problem b = problem_b();
  const double pb = -5.25;
  for (double lam = 0.0; lam <= 6.0 + 1e-12; lam += 0.25) {
    CAPTURE(lam);
    CHECK(dual_exact(b, lam, 10).value <= pb + 1e-6);
  }
  CHECK(dual_exact(b, 3.0, 10).value == doctest::Approx(pb).epsilon(1e-6));
}

TEST_CASE("penalty-driver iteration counts and basins on toy A") {
  const Problem a = problem_a();

  const ToyRun r2 = toy_admm(a, 2, -1);
  REQUIRE(r2.status == ToyStatus::converged);
  CHECK(r2.iterations == 48);
  CHECK(r2.objective == doctest::Approx(1.819398).epsilon(1e-5));

  const ToyRun r10 = toy_admm(a, 10, -1);
  REQUIRE(r10.status == ToyStatus::converged);
  CHECK(r10.iterations == 16);
  CHECK(r10.objective == doctest::Approx(1.819398).epsilon(1e-5));

  const ToyRun r50 = toy_admm(a, 50, -1);
  REQUIRE(r50.status == ToyStatus::converged);
  CHECK(r50.iterations == 8);
  CHECK(r50.objective == doctest::Approx(1.819398).epsilon(1e-5));
  CHECK(r50.lambda == doctest::Approx(0.848528).epsilon(1e-3));

  // Stronger penalty converges in fewer sweeps from this start.
  CHECK(r2.iterations > r10.iterations);
  CHECK(r10.iterations > r50.iterations);

  // The other basin of attraction.
  const ToyRun plus = toy_admm(a, 50, 1);
  REQUIRE(plus.status == ToyStatus::converged);
  CHECK(plus.iterations == 8);
  CHECK(plus.objective == doctest::Approx(1.960820).epsilon(1e-5));
  CHECK(plus.lambda == doctest::Approx(-0.848528).epsilon(1e-3));

  // Trace bookkeeping.
  REQUIRE(r50.trace.size() == static_cast<size_t>(r50.iterations));
  CHECK(r50.trace.front().k == 1);
  CHECK(r50.trace.back().k == r50.iterations);
  CHECK(r50.trace.back().x1 == r50.x1);
  CHECK(r50.trace.back().x2 == r50.x2);
  CHECK(std::max(r50.trace.back().primal_res, r50.trace.back().dual_res) <
        1e-6);
  CHECK(r50.objective ==
        doctest::Approx(a.f1(r50.x1) + a.f2(r50.x2)).epsilon(1e-12));
}

TEST_CASE("inexact inner solves steer toy A to the suboptimal basin") {
  const Problem a = problem_a();
  // Exact block minimization from x2 = +1 stays in the local basin anyway...
  const ToyRun exact = toy_admm(a, 10, 1);
  REQUIRE(exact.status == ToyStatus::converged);
  CHECK(exact.iterations == 16);
  CHECK(exact.objective == doctest::Approx(1.960820).epsilon(1e-5));
  // ...and local (gradient-based) inner solves land wherever their own
  // starting point sits, regardless of the duplicate start.
  const ToyRun local_minus = toy_admm(a, 10, 1, LocalStart{-1, -1});
  REQUIRE(local_minus.status == ToyStatus::converged);
  CHECK(local_minus.iterations == 16);
  CHECK(local_minus.objective == doctest::Approx(1.960820).epsilon(1e-5));
  const ToyRun local_plus = toy_admm(a, 10, -1, LocalStart{1, 1});
  REQUIRE(local_plus.status == ToyStatus::converged);
  CHECK(local_plus.iterations == 16);
  CHECK(local_plus.objective == doctest::Approx(1.819398).epsilon(1e-5));
}

TEST_CASE("proximal driver needs far more sweeps than the penalty driver") {
  const Problem a = problem_a();
  const ToyRun minus = toy_proximal(a, 50, -1, -1);
  REQUIRE(minus.status == ToyStatus::converged);
  CHECK(minus.iterations == 174);
  CHECK(minus.objective == doctest::Approx(1.819398).epsilon(1e-5));

  const ToyRun plus = toy_proximal(a, 50, 1, 1);
  REQUIRE(plus.status == ToyStatus::converged);
  CHECK(plus.iterations == 170);
  CHECK(plus.objective == doctest::Approx(1.960820).epsilon(1e-5));

  const ToyRun admm = toy_admm(a, 50, -1);
  CHECK(minus.iterations > 10 * admm.iterations);
}

TEST_CASE("toy B: start sensitivity flips with the penalty weight") {
  const Problem b = problem_b();

  // rho = 2 reaches the global consensus value from either start.
  const ToyRun lo_plus = toy_admm(b, 2, 1);
  REQUIRE(lo_plus.status == ToyStatus::converged);
  CHECK(lo_plus.iterations == 21);
  CHECK(lo_plus.objective == doctest::Approx(-5.25).epsilon(1e-5));
  const ToyRun lo_minus = toy_admm(b, 2, -1);
  REQUIRE(lo_minus.status == ToyStatus::converged);
  CHECK(lo_minus.iterations == 23);
  CHECK(lo_minus.objective == doctest::Approx(-5.25).epsilon(1e-5));

  // rho = 10 gets trapped by the start at -1.
  const ToyRun hi_minus = toy_admm(b, 10, -1);
  REQUIRE(hi_minus.status == ToyStatus::converged);
  CHECK(hi_minus.iterations == 64);
  CHECK(hi_minus.objective == doctest::Approx(0.75).epsilon(1e-4));
  const ToyRun hi_plus = toy_admm(b, 10, 1);
  REQUIRE(hi_plus.status == ToyStatus::converged);
  CHECK(hi_plus.iterations == 70);
  CHECK(hi_plus.objective == doctest::Approx(-5.25).epsilon(1e-5));

  // Heavier penalties slow convergence on this toy: the opposite of toy A.
  const ToyRun heavy = toy_admm(b, 50, 1);
  REQUIRE(heavy.status == ToyStatus::converged);
  CHECK(heavy.iterations == 281);
  CHECK(heavy.objective == doctest::Approx(-5.25).epsilon(1e-5));
  CHECK(lo_plus.iterations < hi_plus.iterations);
  CHECK(hi_plus.iterations < heavy.iterations);

  // Local inner solves make the inner start decide the basin.
  const ToyRun inner_minus = toy_admm(b, 2, 1, LocalStart{-1, -1});
  REQUIRE(inner_minus.status == ToyStatus::converged);
  CHECK(inner_minus.objective == doctest::Approx(0.75).epsilon(1e-4));
  const ToyRun inner_plus = toy_admm(b, 2, 1, LocalStart{1, 1});
  REQUIRE(inner_plus.status == ToyStatus::converged);
  CHECK(inner_plus.objective == doctest::Approx(-5.25).epsilon(1e-5));
}

TEST_CASE("subgradient ascent: exact inner solves find the kink") {
  const Problem a = problem_a();
  const SubgradRun run = toy_subgradient(a, 0.001, 0, 2000, InnerMode::optimal);
  REQUIRE(run.trace.size() == 2000);
  CHECK(run.best_dual == doctest::Approx(1.766997).epsilon(1e-5));
  // The multiplier hops around the kink once it arrives.
  CHECK(run.final_lambda > 0.119);
  CHECK(run.final_lambda < 0.122);
  // Monotone start: the first steps ascend.
  CHECK(run.trace[1].dual_value >= run.trace[0].dual_value - 1e-12);
}

TEST_CASE("subgradient ascent: runner-up inner solves mislead the search") {
  const Problem a = problem_a();
  const SubgradRun run =
      toy_subgradient(a, 0.1, 0, 200, InnerMode::suboptimal);
  REQUIRE(run.trace.size() == 200);
  // The reported "dual" settles near the suboptimal consensus value, far
  // above the true dual maximum, and the multiplier runs off to the wrong
  // stationary point.
  CHECK(run.best_dual == doctest::Approx(1.960746).epsilon(1e-4));
  CHECK(run.best_dual > 1.9);
  CHECK(run.final_lambda == doctest::Approx(-0.816010).epsilon(1e-2));
  CHECK(run.final_lambda < -0.5);
}

}  // TEST_SUITE
