#include "opfdd/toylab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "opfdd/nlp.hpp"

namespace opfdd::toy {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// One-dimensional search helpers. Templated on the callable so the hot
// nested minimizations (augmented dual) inline the objective.
// ---------------------------------------------------------------------------

// Golden-section minimization on [a, b]; exact enough for doubles once the
// bracket holds a single basin.
template <class F>
double golden_min(F&& f, double a, double b) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  const double tol = 1e-13 * std::max({1.0, std::fabs(a), std::fabs(b)});
  while (b - a > tol) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = f(x2);
    }
  }
  return (a + b) / 2;
}

struct Min1D {
  double x = 0;
  double value = 0;
};

// Sample [lo, hi] at n+1 points, polish every grid-local basin whose sample
// lies within `window` of the best sample, and return the polished minima
// sorted by (value, x). front() is the global minimum over the interval.
template <class F>
std::vector<Min1D> scan_minima(F&& f, double lo, double hi, int n,
                               double window) {
  std::vector<Min1D> out;
  if (!(hi > lo)) {
    out.push_back({lo, f(lo)});
    return out;
  }
  n = std::max(n, 8);
  std::vector<double> v(static_cast<size_t>(n) + 1);
  const double h = (hi - lo) / n;
  double best = kInf;
  for (int i = 0; i <= n; ++i) {
    v[i] = f(lo + i * h);
    best = std::min(best, v[i]);
  }
  for (int i = 0; i <= n && out.size() < 32; ++i) {
    const bool left_ok = (i == 0) || v[i] <= v[i - 1];
    const bool right_ok = (i == n) || v[i] <= v[i + 1];
    if (!(left_ok && right_ok) || v[i] > best + window) continue;
    const double a = lo + std::max(0, i - 1) * h;
    const double b = lo + std::min(n, i + 1) * h;
    const double x = golden_min(f, a, b);
    const double fx = f(x);
    // The polished point can only improve on the sample; keep whichever won.
    out.push_back(fx <= v[i] ? Min1D{x, fx} : Min1D{lo + i * h, v[i]});
  }
  std::sort(out.begin(), out.end(),
            [](const Min1D& p, const Min1D& q) { return p.x < q.x; });
  std::vector<Min1D> ded;
  const double xeps = 1e-7 * std::max({1.0, std::fabs(lo), std::fabs(hi)});
  for (const Min1D& m : out) {
    if (!ded.empty() && std::fabs(m.x - ded.back().x) < xeps) {
      if (m.value < ded.back().value) ded.back() = m;
    } else {
      ded.push_back(m);
    }
  }
  std::sort(ded.begin(), ded.end(), [](const Min1D& p, const Min1D& q) {
    return p.value != q.value ? p.value < q.value : p.x < q.x;
  });
  return ded;
}

struct LineMin {
  std::vector<Min1D> minima;
  bool bounded = true;
};

// Minimize over the whole line by searching twice the documented grid
// domain; a minimum that escapes to that artificial boundary means the
// function is unbounded below.
template <class F>
LineMin minimize_free(F&& f, const Problem& p, int n, double window) {
  const double lo = 2 * p.grid_lo;
  const double hi = 2 * p.grid_hi;
  LineMin r;
  r.minima = scan_minima(f, lo, hi, n, window);
  const double h = (hi - lo) / std::max(n, 8);
  const double bx = r.minima.front().x;
  if (bx <= lo + 1.5 * h || bx >= hi - 1.5 * h) r.bounded = false;
  return r;
}

// Minimize over the x2 interval. Infinite interval ends are clamped to twice
// the grid domain and only an escape through a clamped end counts as
// unbounded; a minimum sitting on a genuine constraint bound is legitimate.
template <class F>
LineMin minimize_in_x2(F&& f, const Problem& p, int n, double window) {
  const double wlo = 2 * p.grid_lo;
  const double whi = 2 * p.grid_hi;
  const bool lo_art = p.x2_lo < wlo;
  const bool hi_art = p.x2_hi > whi;
  const double lo = std::max(p.x2_lo, wlo);
  const double hi = std::min(p.x2_hi, whi);
  LineMin r;
  r.minima = scan_minima(f, lo, hi, n, window);
  const double h = (hi - lo) / std::max(n, 8);
  const double bx = r.minima.front().x;
  if ((lo_art && bx <= lo + 1.5 * h) || (hi_art && bx >= hi - 1.5 * h))
    r.bounded = false;
  return r;
}

// Zeros of a one-dimensional function located by sign changes on a sample
// grid and refined by bisection. Works across jump discontinuities (the
// piecewise-linear |x| derivative), where it converges to the jump point.
template <class F>
std::vector<double> sign_change_roots(F&& d, double lo, double hi, int n) {
  std::vector<double> out;
  if (!(hi > lo)) return out;
  double xp = lo, fp = d(lo);
  for (int i = 1; i <= n; ++i) {
    const double x = lo + (hi - lo) * i / n;
    const double fx = d(x);
    if (fp == 0) out.push_back(xp);
    if ((fp < 0 && fx > 0) || (fp > 0 && fx < 0)) {
      double a = xp, b = x, fa = fp;
      for (int it = 0; it < 200 && b - a > 1e-14 * std::max(1.0, std::fabs(a));
           ++it) {
        const double m = (a + b) / 2;
        const double fm = d(m);
        if (fm == 0) {
          a = b = m;
          break;
        }
        if ((fa < 0) == (fm < 0)) {
          a = m;
          fa = fm;
        } else {
          b = m;
        }
      }
      out.push_back((a + b) / 2);
    }
    xp = x;
    fp = fx;
  }
  if (fp == 0) out.push_back(xp);
  return out;
}

// Grid sizes. The dual oracle uses the documented 1e-3 step over its search
// interval; iterative updates and inner loops of the nested augmented
// minimization use a coarser locating scan (the golden polish restores full
// precision, and every candidate basin is polished before comparison).
int fine_cells(double lo, double hi) {
  return std::max(8, static_cast<int>(std::ceil((hi - lo) / 1e-3)));
}
constexpr int kCoarseCells = 1200;
constexpr double kPolishWindow = 1e-3;  // basins this close to the best get polished
constexpr double kTieWindow = 1e-6;     // value tie that counts as one more argmin

// min over x1 of f1(x1) + lam x1 + rho/2 (x1 - anchor)^2: the inner problem
// of the (augmented) Lagrangian and of every x1-update.
Min1D min_x1_update(const Problem& p, double lam, double rho, double anchor) {
  auto f = [&](double x) {
    const double d = x - anchor;
    return p.f1(x) + lam * x + rho / 2 * d * d;
  };
  return minimize_free(f, p, kCoarseCells, kPolishWindow).minima.front();
}

// min over x2 in X2 of f2(x2) - lam x2 + rho/2 (x1 - x2)^2 (+ prox handled
// by the caller through rho/anchor choice).
Min1D min_x2_update(const Problem& p, double lam, double rho, double anchor) {
  auto f = [&](double x) {
    const double d = anchor - x;
    return p.f2(x) - lam * x + rho / 2 * d * d;
  };
  return minimize_in_x2(f, p, kCoarseCells, kPolishWindow).minima.front();
}

// One-variable local solve with the NLP engine from a fixed start; used by
// the local-mode alternating updates.
template <class F, class G>
double local_min_1var(F&& f, G&& df, double lo, double hi, double start) {
  nlp::Problem q;
  q.n = 1;
  q.lower = Eigen::VectorXd::Constant(1, lo);
  q.upper = Eigen::VectorXd::Constant(1, hi);
  q.objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
    if (grad) (*grad)(0) = df(x(0));
    return f(x(0));
  };
  Eigen::VectorXd x0(1);
  x0 << start;
  return nlp::solve(q, x0).x(0);
}

DualEval dual_classical(const Problem& p, double lambda) {
  DualEval d;
  auto f1 = [&](double x) { return p.f1(x) + lambda * x; };
  auto f2 = [&](double x) { return p.f2(x) - lambda * x; };
  const LineMin m1 =
      minimize_free(f1, p, fine_cells(2 * p.grid_lo, 2 * p.grid_hi),
                    kPolishWindow);
  const double x2lo = std::max(p.x2_lo, 2 * p.grid_lo);
  const double x2hi = std::min(p.x2_hi, 2 * p.grid_hi);
  const LineMin m2 =
      minimize_in_x2(f2, p, fine_cells(x2lo, x2hi), kPolishWindow);
  if (!m1.bounded || !m2.bounded) {
    d.bounded = false;
    d.value = -kInf;
    return d;
  }
  d.value = m1.minima.front().value + m2.minima.front().value;
  for (const Min1D& a : m1.minima) {
    if (a.value > m1.minima.front().value + kTieWindow) break;
    for (const Min1D& b : m2.minima) {
      if (b.value > m2.minima.front().value + kTieWindow) break;
      d.argmins.push_back({a.x, b.x});
      if (d.argmins.size() >= 8) return d;
    }
  }
  return d;
}

DualEval dual_augmented(const Problem& p, double lambda, double rho) {
  // Not separable: sweep x2 and solve the strictly easier x1 problem inside.
  struct Reduced {
    double value;
    double x1;
  };
  auto reduced = [&](double x2) {
    const Min1D inner = min_x1_update(p, lambda, rho, x2);
    return Reduced{p.f2(x2) - lambda * x2 + inner.value, inner.x};
  };
  auto psi = [&](double x2) { return reduced(x2).value; };
  const double x2lo = std::max(p.x2_lo, p.grid_lo);
  const double x2hi = std::min(p.x2_hi, p.grid_hi);
  const std::vector<Min1D> outer =
      scan_minima(psi, x2lo, x2hi, fine_cells(x2lo, x2hi), kPolishWindow);
  DualEval d;
  d.value = outer.front().value;
  for (const Min1D& b : outer) {
    if (b.value > outer.front().value + kTieWindow) break;
    d.argmins.push_back({reduced(b.x).x1, b.x});
    if (d.argmins.size() >= 8) break;
  }
  return d;
}

// Inner minimization "solved" to the stationary point with the
// second-smallest Lagrangian value: enumerate per-variable stationary points
// (plus feasible interval ends for x2), rank the separable combinations, and
// take the runner-up.
DualEval dual_suboptimal(const Problem& p, double lambda) {
  auto f1 = [&](double x) { return p.f1(x) + lambda * x; };
  auto f2 = [&](double x) { return p.f2(x) - lambda * x; };
  auto d1 = [&](double x) { return p.df1(x) + lambda; };
  auto d2 = [&](double x) { return p.df2(x) - lambda; };

  const double wlo = 2 * p.grid_lo, whi = 2 * p.grid_hi;
  std::vector<double> c1 =
      sign_change_roots(d1, wlo, whi, fine_cells(wlo, whi));
  const double x2lo = std::max(p.x2_lo, wlo);
  const double x2hi = std::min(p.x2_hi, whi);
  std::vector<double> c2 =
      sign_change_roots(d2, x2lo, x2hi, fine_cells(x2lo, x2hi));
  if (p.x2_lo >= wlo) c2.push_back(p.x2_lo);
  if (p.x2_hi <= whi) c2.push_back(p.x2_hi);

  DualEval d;
  if (c1.empty() || c2.empty()) {
    // No stationary point in one block: that block's Lagrangian slides off to
    // -inf, so there is nothing to report.
    d.bounded = false;
    d.value = -kInf;
    return d;
  }
  std::vector<std::pair<double, ArgPair>> ranked;
  for (double a : c1)
    for (double b : c2) ranked.push_back({f1(a) + f2(b), {a, b}});
  std::sort(ranked.begin(), ranked.end(),
            [](const auto& u, const auto& v) { return u.first < v.first; });
  const auto& pick = ranked.size() >= 2 ? ranked[1] : ranked[0];
  d.value = pick.first;
  d.argmins.push_back(pick.second);
  return d;
}

}  // namespace

Problem problem_a() {
  Problem p;
  p.name = "A";
  p.f1 = [](double x) {
    const double s = x * x;
    return 2 * s * s * s;
  };
  p.df1 = [](double x) {
    const double s = x * x;
    return 12 * s * s * x;
  };
  p.f2 = [](double x) {
    const double s = x * x;
    return s * s * x - 2 * s + 2.5;
  };
  p.df2 = [](double x) {
    const double s = x * x;
    return 5 * s * s - 4 * x;
  };
  p.g2 = [](double x) { return 1 - 2 * std::exp(-2 * x * x); };
  p.dg2 = [](double x) { return 8 * x * std::exp(-2 * x * x); };
  const double a = std::sqrt(std::log(2.0) / 2.0);
  p.x2_lo = -a;
  p.x2_hi = a;
  p.grid_lo = -3;
  p.grid_hi = 3;
  return p;
}

Problem problem_b() {
  Problem p;
  p.name = "B";
  p.f1 = [](double x) { return -3 * std::fabs(x); };
  p.df1 = [](double x) { return x > 0 ? -3.0 : (x < 0 ? 3.0 : 0.0); };
  p.f2 = [](double x) { return (x - 1) * (x - 1); };
  p.df2 = [](double x) { return 2 * (x - 1); };
  p.x2_lo = -kInf;
  p.x2_hi = kInf;
  // Iterates of the drivers wander past the optimizers before settling, so
  // the documented search domain is wider than for the smooth problem.
  p.grid_lo = -6;
  p.grid_hi = 6;
  return p;
}

DualEval dual_exact(const Problem& p, double lambda, double rho,
                    InnerMode mode) {
  if (mode == InnerMode::suboptimal) return dual_suboptimal(p, lambda);
  if (rho == 0) return dual_classical(p, lambda);
  return dual_augmented(p, lambda, rho);
}

std::vector<ConsensusMin> consensus_minima(const Problem& p) {
  auto phi = [&](double t) { return p.f1(t) + p.f2(t); };
  const double lo = std::max(p.x2_lo, p.grid_lo);
  const double hi = std::min(p.x2_hi, p.grid_hi);
  const std::vector<Min1D> ms =
      scan_minima(phi, lo, hi, fine_cells(lo, hi), kInf);
  std::vector<ConsensusMin> out;
  out.reserve(ms.size());
  for (const Min1D& m : ms) out.push_back({m.x, m.value});
  return out;
}

ToyRun toy_admm(const Problem& p, double rho, double x2_start,
                const std::optional<LocalStart>& local, double lambda_start,
                int max_iter, double tol) {
  double x1 = local ? local->x1 : 0.0;
  double x2 = x2_start;
  double lam = lambda_start;
  ToyRun run;
  double best_res = kInf;
  int stagnant = 0;
  for (int k = 1; k <= max_iter; ++k) {
    const double x2_old = x2;
    if (local) {
      auto h1 = [&](double x) {
        const double d = x - x2;
        return p.f1(x) + lam * x + rho / 2 * d * d;
      };
      auto dh1 = [&](double x) { return p.df1(x) + lam + rho * (x - x2); };
      x1 = local_min_1var(h1, dh1, -kInf, kInf, local->x1);
      auto h2 = [&](double x) {
        const double d = x1 - x;
        return p.f2(x) - lam * x + rho / 2 * d * d;
      };
      auto dh2 = [&](double x) { return p.df2(x) - lam - rho * (x1 - x); };
      x2 = local_min_1var(h2, dh2, p.x2_lo, p.x2_hi, local->x2);
    } else {
      x1 = min_x1_update(p, lam, rho, x2).x;
      x2 = min_x2_update(p, lam, rho, x1).x;
    }
    const double r = std::fabs(x1 - x2);
    const double s = std::fabs(x2 - x2_old);
    run.trace.push_back({k, x1, x2, lam, r, s, p.f1(x1) + p.f2(x2)});
    lam += rho * (x1 - x2);
    run.iterations = k;
    const double m = std::max(r, s);
    if (m < tol) {
      run.status = ToyStatus::converged;
      break;
    }
    if (m < best_res) {
      best_res = m;
      stagnant = 0;
    } else if (++stagnant >= 2000) {
      run.status = ToyStatus::oscillating;
      break;
    }
  }
  run.x1 = x1;
  run.x2 = x2;
  run.lambda = lam;
  run.objective = p.f1(x1) + p.f2(x2);
  return run;
}

ToyRun toy_proximal(const Problem& p, double nu, double x1_start,
                    double x2_start, double lambda_start, int max_iter,
                    double tol) {
  double x1 = x1_start;
  double x2 = x2_start;
  double lam = lambda_start;
  ToyRun run;
  double best_res = kInf;
  int stagnant = 0;
  for (int k = 1; k <= max_iter; ++k) {
    const double x1_old = x1;
    const double x2_old = x2;
    // Simultaneous: both blocks minimize the plain Lagrangian plus a step
    // penalty against their own previous value.
    x1 = min_x1_update(p, lam, nu, x1_old).x;
    auto f2 = [&](double x) {
      const double d = x - x2_old;
      return p.f2(x) - lam * x + nu / 2 * d * d;
    };
    x2 = minimize_in_x2(f2, p, kCoarseCells, kPolishWindow).minima.front().x;
    const double r = std::fabs(x1 - x2);
    const double s =
        std::max(std::fabs(x1 - x1_old), std::fabs(x2 - x2_old));
    run.trace.push_back({k, x1, x2, lam, r, s, p.f1(x1) + p.f2(x2)});
    lam += nu * (x1 - x2);
    run.iterations = k;
    const double m = std::max(r, s);
    if (m < tol) {
      run.status = ToyStatus::converged;
      break;
    }
    if (m < best_res) {
      best_res = m;
      stagnant = 0;
    } else if (++stagnant >= 2000) {
      run.status = ToyStatus::oscillating;
      break;
    }
  }
  run.x1 = x1;
  run.x2 = x2;
  run.lambda = lam;
  run.objective = p.f1(x1) + p.f2(x2);
  return run;
}

SubgradRun toy_subgradient(const Problem& p, double step, double lambda_start,
                           int iterations, InnerMode mode) {
  SubgradRun run;
  run.best_dual = -kInf;
  double lam = lambda_start;
  for (int k = 1; k <= iterations; ++k) {
    const DualEval d = dual_exact(p, lam, 0, mode);
    if (!d.bounded || d.argmins.empty()) {
      run.trace.push_back({k, lam, -kInf, 0});
      run.final_dual = -kInf;
      run.final_lambda = lam;
      break;
    }
    const ArgPair& a = d.argmins.front();
    const double g = a.x1 - a.x2;
    run.trace.push_back({k, lam, d.value, g});
    run.best_dual = std::max(run.best_dual, d.value);
    run.final_dual = d.value;
    run.final_lambda = lam;
    lam += step * g;
  }
  return run;
}

}  // namespace opfdd::toy
