#include "opfdd/nlp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <vector>

#include "opfdd/errors.hpp"

namespace opfdd::nlp {

namespace {

Eigen::VectorXd clip(const Eigen::VectorXd& x, const Eigen::VectorXd& lo,
                     const Eigen::VectorXd& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

// Shared evaluation of the augmented-Lagrangian merit
//   phi(x) = f + y.h + mu/2 |h|^2 + 1/(2mu) sum(max(0, z+mu*g)^2 - z^2)
// and, when requested, its gradient
//   grad phi = grad f + Jh' (y + mu h) + Jg' max(0, z + mu g).
struct MeritEval {
  double f = 0;      // raw objective
  double phi = 0;    // merit value
  Eigen::VectorXd h, g;  // constraint values (possibly empty)
};

class Merit {
 public:
  Merit(const Problem& p, const Eigen::VectorXd& y, const Eigen::VectorXd& z,
        double mu)
      : p_(p), y_(y), z_(z), mu_(mu) {}

  MeritEval eval(const Eigen::VectorXd& x, Eigen::VectorXd* grad) const {
    MeritEval out;
    if (grad) grad->setZero(p_.n);  // objectives may write single entries
    out.phi = out.f = p_.objective(x, grad);
    if (p_.n_eq > 0) {
      out.h.resize(p_.n_eq);
      Eigen::MatrixXd jac;
      if (grad) jac.resize(p_.n_eq, p_.n);
      p_.equalities(x, out.h, grad ? &jac : nullptr);
      out.phi += y_.dot(out.h) + 0.5 * mu_ * out.h.squaredNorm();
      if (grad) grad->noalias() += jac.transpose() * (y_ + mu_ * out.h);
    }
    if (p_.n_ineq > 0) {
      out.g.resize(p_.n_ineq);
      Eigen::MatrixXd jac;
      if (grad) jac.resize(p_.n_ineq, p_.n);
      p_.inequalities(x, out.g, grad ? &jac : nullptr);
      const Eigen::VectorXd t = (z_ + mu_ * out.g).cwiseMax(0.0);
      out.phi += (t.squaredNorm() - z_.squaredNorm()) / (2 * mu_);
      if (grad) grad->noalias() += jac.transpose() * t;
    }
    return out;
  }

 private:
  const Problem& p_;
  const Eigen::VectorXd& y_;
  const Eigen::VectorXd& z_;
  double mu_;
};

struct InnerResult {
  Eigen::VectorXd x, grad;
  MeritEval last;
  double stationarity = 0;  // inf-norm of x - clip(x - grad)
  int iterations = 0;
  bool unbounded = false;
};

double stationarity_norm(const Eigen::VectorXd& x, const Eigen::VectorXd& grad,
                         const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  return (x - clip(x - grad, lo, hi)).lpNorm<Eigen::Infinity>();
}

// Projected L-BFGS with Armijo backtracking along the projected path.
InnerResult minimize_merit(const Problem& p, const Merit& merit,
                           const Eigen::VectorXd& x0, double tol,
                           const Options& opts) {
  const char* tr = std::getenv("OPFDD_NLP_TRACE");
  const bool trace2 = tr && tr[0] == '2';
  InnerResult r;
  r.x = x0;
  r.last = merit.eval(r.x, &r.grad);
  std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>> mem;  // (s, y)
  int stalled = 0;  // consecutive accepted steps with negligible decrease
  for (int it = 0; it < opts.max_inner; ++it) {
    if (trace2 && it % 500 == 0) {
      std::fprintf(stderr, "  [inner %5d] phi=%.10e stat=%.3e mem=%zu\n", it,
                   r.last.phi,
                   stationarity_norm(r.x, r.grad, p.lower, p.upper),
                   mem.size());
      if (it == 500) {
        Eigen::VectorXd x = r.x;
        double worst = 0;
        int worst_i = -1;
        for (int i = 0; i < p.n; ++i) {
          const double h = 1e-7 * std::max(1.0, std::abs(x[i]));
          const double xi = x[i];
          x[i] = xi + h;
          const double fp = merit.eval(x, nullptr).phi;
          x[i] = xi - h;
          const double fm = merit.eval(x, nullptr).phi;
          x[i] = xi;
          const double e = std::abs((fp - fm) / (2 * h) - r.grad[i]);
          if (e > worst) {
            worst = e;
            worst_i = i;
          }
        }
        std::fprintf(stderr,
                     "  [inner] merit fd worst=%.3e at var %d (grad=%.6e)\n",
                     worst, worst_i, worst_i >= 0 ? r.grad[worst_i] : 0.0);
      }
    }
    if (r.last.f < opts.unbounded_floor) {
      r.unbounded = true;
      break;
    }
    r.stationarity = stationarity_norm(r.x, r.grad, p.lower, p.upper);
    if (r.stationarity < tol) break;
    ++r.iterations;

    // Two-loop recursion on the gradient with active-at-bound components
    // masked out, so the quasi-Newton model only acts on free variables.
    Eigen::VectorXd gm = r.grad;
    const double act = 1e-12;
    for (int i = 0; i < p.n; ++i) {
      const bool at_lo = r.x[i] <= p.lower[i] + act && gm[i] > 0;
      const bool at_hi = r.x[i] >= p.upper[i] - act && gm[i] < 0;
      if (at_lo || at_hi) gm[i] = 0;
    }
    Eigen::VectorXd d = -gm;
    if (!mem.empty()) {
      std::vector<double> alpha(mem.size());
      Eigen::VectorXd q = gm;
      for (int i = static_cast<int>(mem.size()) - 1; i >= 0; --i) {
        const auto& [s, yv] = mem[i];
        const double rho = 1.0 / s.dot(yv);
        alpha[i] = rho * s.dot(q);
        q -= alpha[i] * yv;
      }
      const auto& [s_b, y_b] = mem.back();
      q *= s_b.dot(y_b) / y_b.squaredNorm();
      for (size_t i = 0; i < mem.size(); ++i) {
        const auto& [s, yv] = mem[i];
        const double rho = 1.0 / s.dot(yv);
        q += (alpha[i] - rho * yv.dot(q)) * s;
      }
      d = -q;
      if (d.dot(gm) > -1e-12 * d.norm() * gm.norm()) {
        mem.clear();
        d = -gm;
      }
    }

    // Armijo backtracking along the projected arc x(a) = clip(x + a d).
    // Near the solution the merit becomes flat to machine precision while
    // its gradient is still informative, so a trial that measurably reduces
    // the projected gradient without raising the merit is kept as a fallback
    // when no trial passes the decrease test.
    const double c1 = 1e-4;
    double a = 1.0;
    bool accepted = false;
    bool grad_step = false;
    Eigen::VectorXd x_new, g_new;
    MeritEval e_new;
    Eigen::VectorXd x_fb, g_fb;
    MeritEval e_fb;
    bool have_fb = false;
    for (int bt = 0; bt < 60; ++bt) {
      x_new = clip(r.x + a * d, p.lower, p.upper);
      const Eigen::VectorXd step = x_new - r.x;
      if (step.lpNorm<Eigen::Infinity>() == 0) break;
      e_new = merit.eval(x_new, &g_new);
      if (e_new.phi <= r.last.phi + c1 * r.grad.dot(step)) {
        accepted = true;
        break;
      }
      if (!have_fb &&
          e_new.phi <= r.last.phi + 1e-12 * (1.0 + std::abs(r.last.phi)) &&
          stationarity_norm(x_new, g_new, p.lower, p.upper) <
              0.999 * r.stationarity) {
        x_fb = x_new;
        g_fb = g_new;
        e_fb = e_new;
        have_fb = true;
      }
      a *= 0.5;
    }
    if (!accepted && have_fb) {
      x_new = x_fb;
      g_new = g_fb;
      e_new = e_fb;
      accepted = true;
      grad_step = true;
    }
    if (!accepted) break;  // line search stalled: return best point so far

    const Eigen::VectorXd s = x_new - r.x;
    Eigen::VectorXd yv = g_new - r.grad;
    // Pinned variables carry no step, so their gradient variation is noise
    // to the quasi-Newton model; drop it from the pair.
    for (int i = 0; i < p.n; ++i)
      if (p.lower[i] == p.upper[i]) yv[i] = 0;
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      mem.emplace_back(s, yv);
      if (static_cast<int>(mem.size()) > opts.lbfgs_memory) mem.pop_front();
    }
    const double progress = r.last.phi - e_new.phi;
    const bool grad_progress =
        grad_step || stationarity_norm(x_new, g_new, p.lower, p.upper) <
                         0.999 * r.stationarity;
    r.x = x_new;
    r.grad = g_new;
    r.last = e_new;

    // Accepted steps that move neither the merit nor its projected gradient
    // mean the search has hit its numerical floor.  Retry once from a fresh
    // steepest-descent model, then hand the point back to the outer loop.
    if (!grad_progress &&
        progress <= 1e-13 * (1.0 + std::abs(e_new.phi))) {
      ++stalled;
      if (stalled == 1 && !mem.empty()) {
        mem.clear();
      } else if (stalled >= 2) {
        break;
      }
    } else {
      stalled = 0;
    }
  }
  r.stationarity = stationarity_norm(r.x, r.grad, p.lower, p.upper);
  return r;
}

double violation(const MeritEval& e) {
  double v = 0;
  if (e.h.size() > 0) v = e.h.lpNorm<Eigen::Infinity>();
  if (e.g.size() > 0) v = std::max(v, e.g.cwiseMax(0.0).lpNorm<Eigen::Infinity>());
  return v;
}

// Feasibility and Lagrangian stationarity of a primal-dual point, measured
// directly on the original problem data (no penalty terms, no cancellation).
struct Certificate {
  double viol = kInf;
  double stat = kInf;
  double f = 0;
};

Certificate certify(const Problem& p, const Eigen::VectorXd& x,
                    const Eigen::VectorXd& y, const Eigen::VectorXd& z) {
  Certificate c;
  Eigen::VectorXd gL(p.n);
  c.f = p.objective(x, &gL);
  c.viol = 0;
  if (p.n_eq > 0) {
    Eigen::VectorXd h(p.n_eq);
    Eigen::MatrixXd Jh(p.n_eq, p.n);
    p.equalities(x, h, &Jh);
    gL.noalias() += Jh.transpose() * y;
    c.viol = h.lpNorm<Eigen::Infinity>();
  }
  if (p.n_ineq > 0) {
    Eigen::VectorXd g(p.n_ineq);
    Eigen::MatrixXd Jg(p.n_ineq, p.n);
    p.inequalities(x, g, &Jg);
    gL.noalias() += Jg.transpose() * z;
    c.viol = std::max(c.viol, g.cwiseMax(0.0).lpNorm<Eigen::Infinity>());
  }
  c.stat = stationarity_norm(x, gL, p.lower, p.upper);
  return c;
}

// Newton refinement of the KKT system on an estimated active set.  The
// augmented-Lagrangian loop reliably lands near the solution but its merit
// flattens to machine precision before the KKT residual meets tight
// tolerances; solving the stationarity/active-constraint equations directly
// (with a finite-difference Lagrangian Hessian) removes both floors.  Any
// failure leaves the input point untouched.
struct PolishPoint {
  Eigen::VectorXd x, y, z;
  Certificate cert;
};

bool polish_kkt(const Problem& p, PolishPoint& pt) {
  const bool trace = std::getenv("OPFDD_NLP_TRACE") != nullptr;
  const int ne = p.n_eq;
  const int ni = p.n_ineq;
  Eigen::VectorXd x = pt.x;
  Eigen::VectorXd y = pt.y;
  Eigen::VectorXd z = pt.z;
  bool improved_any = false;

  std::vector<int> fixed_side(p.n, 0);  // -1 at lower, +1 at upper, 0 free
  std::vector<char> active(ni, 0);
  std::vector<char> banned(ni, 0);  // dropped after over-determining Newton

  // Working evaluation shared by residual and finite-difference columns.
  Eigen::VectorXd h(ne), g(ni);
  Eigen::MatrixXd Jh(ne, p.n), Jg(ni, p.n);
  const auto eval_gL = [&](const Eigen::VectorXd& at, const Eigen::VectorXd& w,
                           Eigen::VectorXd& gL) {
    p.objective(at, &gL);
    if (ne > 0) {
      p.equalities(at, h, &Jh);
      gL.noalias() += Jh.transpose() * y;
    }
    if (ni > 0) {
      p.inequalities(at, g, &Jg);
      gL.noalias() += Jg.transpose() * w;
    }
  };

  for (int round = 0; round < 6; ++round) {
    // Estimate the active set at the current point.
    for (int i = 0; i < p.n; ++i) {
      const double span = 1e-7 * (1.0 + std::abs(x[i]));
      if (p.lower[i] == p.upper[i] || x[i] <= p.lower[i] + span)
        fixed_side[i] = -1;
      else if (x[i] >= p.upper[i] - span)
        fixed_side[i] = 1;
      else
        fixed_side[i] = 0;
      if (fixed_side[i] != 0)
        x[i] = fixed_side[i] < 0 ? p.lower[i] : p.upper[i];
    }
    if (ni > 0) {
      Eigen::VectorXd g0(ni);
      p.inequalities(x, g0, nullptr);
      for (int j = 0; j < ni; ++j)
        active[j] = (!banned[j] && (g0[j] > -1e-6 || z[j] > 1e-8)) ? 1 : 0;
    }
    std::vector<int> fr, act;
    for (int i = 0; i < p.n; ++i)
      if (fixed_side[i] == 0) fr.push_back(i);
    for (int j = 0; j < ni; ++j)
      if (active[j]) act.push_back(j);
    const int nf = static_cast<int>(fr.size());
    const int na = static_cast<int>(act.size());
    const int dim = nf + ne + na;
    if (dim == 0) break;

    Eigen::VectorXd w = Eigen::VectorXd::Zero(ni);
    for (int j : act) w[j] = std::max(0.0, z[j]);

    // The multipliers enter the stationarity rows linearly, so reset them by
    // least squares on the free coordinates before Newton; the incoming
    // values can be badly perturbed by late penalty updates.
    if (ne + na > 0 && nf > 0) {
      Eigen::VectorXd gf(p.n);
      p.objective(x, &gf);
      if (ne > 0) p.equalities(x, h, &Jh);
      if (ni > 0) p.inequalities(x, g, &Jg);
      Eigen::MatrixXd A(nf, ne + na);
      Eigen::VectorXd b(nf);
      for (int k = 0; k < nf; ++k) {
        b[k] = -gf[fr[k]];
        for (int r = 0; r < ne; ++r) A(k, r) = Jh(r, fr[k]);
        for (int a = 0; a < na; ++a) A(k, ne + a) = Jg(act[a], fr[k]);
      }
      const Eigen::VectorXd m =
          A.completeOrthogonalDecomposition().solve(b);
      for (int r = 0; r < ne; ++r) y[r] = m[r];
      for (int a = 0; a < na; ++a) w[act[a]] = std::max(0.0, m[ne + a]);
    }

    const auto residual = [&](const Eigen::VectorXd& at,
                              const Eigen::VectorXd& wa,
                              const Eigen::VectorXd& ya) {
      Eigen::VectorXd gL(p.n), F(dim);
      y = ya;  // eval_gL closes over y for the equality term
      eval_gL(at, wa, gL);
      for (int k = 0; k < nf; ++k) F[k] = gL[fr[k]];
      for (int r = 0; r < ne; ++r) F[nf + r] = h[r];
      for (int a = 0; a < na; ++a) F[nf + ne + a] = g[act[a]];
      return F;
    };

    Eigen::VectorXd F = residual(x, w, y);
    bool newton_ok = false;
    for (int it = 0; it < 25; ++it) {
      const double fnorm = F.lpNorm<Eigen::Infinity>();
      if (fnorm < 1e-11) {
        newton_ok = true;
        break;
      }
      // Assemble the KKT Jacobian: Lagrangian Hessian block by forward
      // differences of the gradient, constraint blocks analytic.
      Eigen::MatrixXd J(dim, dim);
      J.setZero();
      Eigen::VectorXd gL0(p.n);
      eval_gL(x, w, gL0);
      const Eigen::MatrixXd Jh0 = Jh;
      const Eigen::MatrixXd Jg0 = Jg;
      Eigen::VectorXd xs = x, gLs(p.n);
      for (int k = 0; k < nf; ++k) {
        const int i = fr[k];
        const double hstep = 1e-7 * (1.0 + std::abs(x[i]));
        xs[i] = x[i] + hstep;
        eval_gL(xs, w, gLs);
        xs[i] = x[i];
        for (int k2 = 0; k2 < nf; ++k2)
          J(k2, k) = (gLs[fr[k2]] - gL0[fr[k2]]) / hstep;
      }
      for (int r = 0; r < ne; ++r)
        for (int k = 0; k < nf; ++k) {
          J(k, nf + r) = Jh0(r, fr[k]);
          J(nf + r, k) = Jh0(r, fr[k]);
        }
      for (int a = 0; a < na; ++a)
        for (int k = 0; k < nf; ++k) {
          J(k, nf + ne + a) = Jg0(act[a], fr[k]);
          J(nf + ne + a, k) = Jg0(act[a], fr[k]);
        }
      // Min-norm least-squares step: active sets with dependent rows (for
      // example both flow limits of a near-symmetric branch) make the system
      // rank-deficient but still consistent, and the minimum-norm multiplier
      // choice is as good a certificate as any.
      const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(J);
      const Eigen::VectorXd du = cod.solve(-F);

      // Damped update on the residual norm.
      const Eigen::VectorXd y_base = y;
      double a_step = 1.0;
      bool improved = false;
      Eigen::VectorXd x_try, w_try, y_try, F_try;
      for (int bt = 0; bt < 12; ++bt) {
        x_try = x;
        w_try = w;
        y_try = y_base;
        for (int k = 0; k < nf; ++k) x_try[fr[k]] += a_step * du[k];
        for (int r = 0; r < ne; ++r) y_try[r] += a_step * du[nf + r];
        for (int a2 = 0; a2 < na; ++a2)
          w_try[act[a2]] += a_step * du[nf + ne + a2];
        F_try = residual(x_try, w_try, y_try);
        if (F_try.lpNorm<Eigen::Infinity>() < fnorm) {
          improved = true;
          break;
        }
        a_step *= 0.5;
      }
      if (!improved) {
        y = y_base;
        break;
      }
      x = x_try;
      w = w_try;
      y = y_try;
      F = F_try;
    }

    // Certify the Newton endpoint before any active-set revision can move
    // away from it; keep the best certified point seen.
    {
      Eigen::VectorXd x_c = x.cwiseMax(p.lower).cwiseMin(p.upper);
      Eigen::VectorXd z_c = Eigen::VectorXd::Zero(ni);
      for (int j : act) z_c[j] = std::max(0.0, w[j]);
      const Certificate c = certify(p, x_c, y, z_c);
      if (trace)
        std::fprintf(stderr,
                     "[nlp] polish round %d: nf=%d na=%d newton_ok=%d "
                     "|F|=%.3e cert viol=%.3e stat=%.3e\n",
                     round, nf, na, newton_ok ? 1 : 0,
                     F.lpNorm<Eigen::Infinity>(), c.viol, c.stat);
      if (std::max(c.viol, c.stat) < std::max(pt.cert.viol, pt.cert.stat)) {
        pt.x = x_c;
        pt.y = y;
        pt.z = z_c;
        pt.cert = c;
        improved_any = true;
      }
      if (c.viol < 1e-10 && c.stat < 1e-9) return true;
    }

    // Revise the working sets from the endpoint, whether Newton finished or
    // stalled: release bounds whose Lagrangian gradient points inward, drop
    // negative multipliers, activate crossed constraints, and re-box strays.
    bool changed = false;
    Eigen::VectorXd gL(p.n);
    eval_gL(x, w, gL);
    for (int j = 0; j < ni; ++j) {
      if (active[j] && w[j] < -1e-8) {
        z[j] = 0;
        changed = true;
      } else if (!active[j] && !banned[j] && g[j] > 1e-9) {
        z[j] = std::max(z[j], 1e-6);  // force activation next round
        changed = true;
      } else {
        z[j] = active[j] ? std::max(0.0, w[j]) : 0.0;
      }
    }
    for (int i = 0; i < p.n; ++i) {
      if (p.lower[i] == p.upper[i]) continue;
      if (fixed_side[i] == 1 && gL[i] > 1e-8) {
        x[i] -= 1e-6 * (1.0 + std::abs(x[i]));  // step off the bound
        changed = true;
      } else if (fixed_side[i] == -1 && gL[i] < -1e-8) {
        x[i] += 1e-6 * (1.0 + std::abs(x[i]));
        changed = true;
      } else if (fixed_side[i] == 0 &&
                 (x[i] < p.lower[i] - 1e-9 || x[i] > p.upper[i] + 1e-9)) {
        x[i] = std::clamp(x[i], p.lower[i], p.upper[i]);
        changed = true;
      }
    }
    if (changed) continue;

    if (newton_ok) break;  // solved on a self-consistent set; pt is the best

    // Stalled on a self-consistent set: an over-determined subset (such as
    // both flow limits of a low-loss branch) cannot all be pinned to zero.
    // Release the active row with the most slack and retry without it.
    int j_drop = -1;
    double g_min = -1e-8;
    for (int j : act)
      if (g[j] < g_min) {
        g_min = g[j];
        j_drop = j;
      }
    if (trace)
      std::fprintf(stderr,
                   "[nlp] polish: newton stalled |F|=%.3e (round %d, drop %d)\n",
                   F.lpNorm<Eigen::Infinity>(), round, j_drop);
    if (j_drop < 0) break;
    banned[j_drop] = 1;
    z[j_drop] = 0;
  }
  return improved_any;
}

}  // namespace

Result solve(const Problem& p, const Eigen::VectorXd& x0, const Options& opts) {
  if (x0.size() != p.n || p.lower.size() != p.n || p.upper.size() != p.n)
    throw InfeasibleStart("start/bounds dimension mismatch");
  for (int i = 0; i < p.n; ++i) {
    if (!std::isfinite(x0[i]))
      throw InfeasibleStart("starting point has a non-finite component");
    if (p.lower[i] > p.upper[i])
      throw InfeasibleStart("lower bound exceeds upper bound");
  }

  Result res;
  res.x = clip(x0, p.lower, p.upper);
  res.eq_multipliers = Eigen::VectorXd::Zero(p.n_eq);
  res.ineq_multipliers = Eigen::VectorXd::Zero(p.n_ineq);

  const bool trace = std::getenv("OPFDD_NLP_TRACE") != nullptr;
  if (trace) {
    // Derivative self-check at the start point: central differences against
    // the caller's analytic derivatives.
    Eigen::VectorXd g0(p.n);
    p.objective(res.x, &g0);
    double worst_obj = 0, worst_eq = 0, worst_in = 0;
    Eigen::VectorXd h0(p.n_eq), hp(p.n_eq), hm(p.n_eq);
    Eigen::VectorXd q0(p.n_ineq), qp(p.n_ineq), qm(p.n_ineq);
    Eigen::MatrixXd Jh(p.n_eq, p.n), Jg(p.n_ineq, p.n);
    if (p.n_eq > 0) p.equalities(res.x, h0, &Jh);
    if (p.n_ineq > 0) p.inequalities(res.x, q0, &Jg);
    Eigen::VectorXd x = res.x;
    for (int i = 0; i < p.n; ++i) {
      const double h = 1e-6 * std::max(1.0, std::abs(x[i]));
      const double xi = x[i];
      x[i] = xi + h;
      const double fp = p.objective(x, nullptr);
      if (p.n_eq > 0) p.equalities(x, hp, nullptr);
      if (p.n_ineq > 0) p.inequalities(x, qp, nullptr);
      x[i] = xi - h;
      const double fm = p.objective(x, nullptr);
      if (p.n_eq > 0) p.equalities(x, hm, nullptr);
      if (p.n_ineq > 0) p.inequalities(x, qm, nullptr);
      x[i] = xi;
      worst_obj = std::max(worst_obj, std::abs((fp - fm) / (2 * h) - g0[i]));
      for (int r = 0; r < p.n_eq; ++r)
        worst_eq = std::max(worst_eq,
                            std::abs((hp[r] - hm[r]) / (2 * h) - Jh(r, i)));
      for (int r = 0; r < p.n_ineq; ++r)
        worst_in = std::max(worst_in,
                            std::abs((qp[r] - qm[r]) / (2 * h) - Jg(r, i)));
    }
    std::fprintf(stderr,
                 "[nlp] fd check: obj %.3e eq %.3e ineq %.3e (n=%d)\n",
                 worst_obj, worst_eq, worst_in, p.n);
  }

  const double stat_tol = opts.stat_tol > 0 ? opts.stat_tol : opts.tol;
  double mu = opts.penalty_init;
  // Inner stationarity tolerance tightens geometrically toward stat_tol.
  double inner_tol = std::max(stat_tol, 1e-2 * std::sqrt(opts.tol));
  double prev_viol = kInf;

  // Multiplier updates on noise-level residuals can perturb an already-good
  // iterate, so remember the best KKT point seen for the exhaustion path.
  Eigen::VectorXd best_x, best_y, best_z;
  double best_f = 0, best_kkt = kInf, best_viol = kInf, best_stat = kInf;

  Eigen::VectorXd grad;
  for (int outer = 0; outer < opts.max_outer; ++outer) {
    ++res.outer_iterations;
    const Merit merit(p, res.eq_multipliers, res.ineq_multipliers, mu);
    InnerResult inner =
        minimize_merit(p, merit, res.x, inner_tol, opts);
    res.x = inner.x;
    res.f = inner.last.f;
    res.inner_iterations += inner.iterations;
    if (inner.unbounded) {
      res.status = Status::unbounded_below;
      res.kkt_residual = inner.stationarity;
      return res;
    }

    const double viol = violation(inner.last);

    // First-order multiplier updates (safeguarded by the penalty test below).
    if (p.n_eq > 0) res.eq_multipliers += mu * inner.last.h;
    if (p.n_ineq > 0)
      res.ineq_multipliers =
          (res.ineq_multipliers + mu * inner.last.g).cwiseMax(0.0);

    // Stationarity of the Lagrangian at the updated multipliers equals the
    // merit gradient at the just-solved point, so reuse it.
    res.kkt_residual = std::max(inner.stationarity, viol);
    if (res.kkt_residual < best_kkt) {
      best_kkt = res.kkt_residual;
      best_viol = viol;
      best_stat = inner.stationarity;
      best_x = res.x;
      best_f = res.f;
      best_y = res.eq_multipliers;
      best_z = res.ineq_multipliers;
    }
    if (trace)
      std::fprintf(stderr,
                   "[nlp] outer %3d: f=%.8e viol=%.3e stat=%.3e mu=%.1e "
                   "inner=%d\n",
                   outer, inner.last.f, viol, inner.stationarity, mu,
                   inner.iterations);
    if (viol < opts.tol && inner.stationarity < stat_tol) {
      res.status = Status::converged;
      break;
    }

    // Grow the penalty only while the violation is both meaningful and not
    // contracting; noise-level residuals must not inflate mu, and a hard cap
    // keeps the merit numerically workable.
    if (viol > 10 * opts.tol && viol > 0.25 * prev_viol)
      mu = std::min(mu * opts.penalty_growth, 1e6);
    prev_viol = viol;
    inner_tol = std::max(stat_tol, inner_tol * 0.1);
  }
  // With constraints present, finish with a Newton polish of the KKT system
  // starting from the last (typically most feasible) iterate, and judge
  // convergence from the certified point.  Fall back to the best iterate the
  // loop saw when the polish cannot improve on it.
  if (p.n_eq + p.n_ineq > 0) {
    PolishPoint pt{res.x, res.eq_multipliers, res.ineq_multipliers,
                   certify(p, res.x, res.eq_multipliers, res.ineq_multipliers)};
    const bool polished = polish_kkt(p, pt);
    const double polished_kkt = std::max(pt.cert.viol, pt.cert.stat);
    if (polished_kkt <= best_kkt) {
      res.x = pt.x;
      res.f = pt.cert.f;
      res.eq_multipliers = pt.y;
      res.ineq_multipliers = pt.z;
      res.kkt_residual = polished_kkt;
      res.status = (pt.cert.viol < opts.tol && pt.cert.stat < stat_tol)
                       ? Status::converged
                       : Status::max_iterations;
    } else {
      res.x = best_x;
      res.f = best_f;
      res.eq_multipliers = best_y;
      res.ineq_multipliers = best_z;
      res.kkt_residual = best_kkt;
      res.status = (best_viol < opts.tol && best_stat < stat_tol)
                       ? Status::converged
                       : Status::max_iterations;
    }
    if (trace)
      std::fprintf(stderr, "[nlp] polish: %s viol=%.3e stat=%.3e f=%.8e\n",
                   polished ? "applied" : "no improvement", pt.cert.viol,
                   pt.cert.stat, pt.cert.f);
  } else if (best_kkt < res.kkt_residual) {
    res.x = best_x;
    res.f = best_f;
    res.eq_multipliers = best_y;
    res.ineq_multipliers = best_z;
    res.kkt_residual = best_kkt;
  }
  return res;
}

}  // namespace opfdd::nlp
