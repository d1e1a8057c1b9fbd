#include "varpen/solvers.hpp"

#include <cmath>
#include <fstream>
#include <limits>

namespace varpen {

namespace {

void check_forward(const Potential& phi, const Vec& y0, const Control& u) {
  if (y0.size() != phi.dim() || u.dim() != phi.dim()) {
    throw std::invalid_argument("forward solve: dimension mismatch");
  }
  if (!std::isfinite(phi.value(y0))) {
    throw DomainError("forward solve: y0 outside the domain of phi");
  }
}

// Solve b - a + dt (g(a, b) - u) = 0 with g the averaged gradient.
Vec midpoint_step(const Potential& phi, const Vec& a, const Vec& u, double dt) {
  Vec b = phi.prox(dt, a + dt * u);
  const Mat eye = Mat::Identity(a.size(), a.size());
  auto residual = [&](const Vec& x) {
    return Vec(x - a + dt * (averaged_gradient(phi, a, x) - u));
  };
  Vec r = residual(b);
  for (int it = 0; it < 100; ++it) {
    const double scale = 1.0 + a.norm() + b.norm() + dt * u.norm();
    if (r.norm() <= 1e-15 * scale) return b;
    const AveragedGradient ag = averaged_gradient_jacobian(phi, a, b);
    const Vec d = (eye + dt * ag.d_b).lu().solve(-r);
    double t = 1.0;
    Vec trial = b + d;
    Vec rt = residual(trial);
    while (!(rt.allFinite() && rt.norm() < r.norm()) && t > 1e-10) {
      t *= 0.5;
      trial = b + t * d;
      rt = residual(trial);
    }
    if (!(rt.norm() < r.norm())) {
      if (r.norm() <= 1e-12 * scale) return b;
      break;
    }
    b = std::move(trial);
    r = std::move(rt);
  }
  if (r.norm() <= 1e-12 * (1.0 + b.norm())) return b;
  throw SolverError("midpoint step: Newton did not converge");
}

}  // namespace

Trajectory forward_solve(const Potential& phi, const Vec& y0, const Control& u,
                         Scheme scheme) {
  check_forward(phi, y0, u);
  const TimeGrid& g = u.grid();
  const double dt = g.dt();
  Mat nodes(g.intervals() + 1, y0.size());
  nodes.row(0) = y0.transpose();
  Vec y = y0;
  for (int k = 0; k < g.intervals(); ++k) {
    const Vec uk = u.value(k);
    if (scheme == Scheme::Midpoint && phi.smooth()) {
      y = midpoint_step(phi, y, uk, dt);
    } else {
      y = phi.prox(dt, y + dt * uk);
    }
    nodes.row(k + 1) = y.transpose();
  }
  return Trajectory(g, std::move(nodes));
}

Trajectory forward_solve(const ForwardProblem& fp) {
  if (!fp.potential) throw std::invalid_argument("forward solve: potential missing");
  return forward_solve(*fp.potential, fp.y0, fp.u, fp.scheme);
}

Trajectory forward_solve_rate(const Potential& phi, const RatePotential& psi,
                              const Vec& y0, const Control& u) {
  check_forward(phi, y0, u);
  const TimeGrid& g = u.grid();
  const double dt = g.dt();
  const int d = static_cast<int>(y0.size());
  Mat nodes(g.intervals() + 1, d);
  nodes.row(0) = y0.transpose();

  const auto* power = dynamic_cast<const PowerRate*>(&psi);
  const bool quadratic_rate =
      power && power->exponent() == 2.0 && power->state_independent();

  Vec a = y0;
  for (int k = 0; k < g.intervals(); ++k) {
    const Vec uk = u.value(k);
    Vec x;
    if (quadratic_rate) {
      const double beta = power->beta().value(a);
      x = phi.prox(dt / beta, a + (dt / beta) * uk);
    } else {
      auto objective = [&](const Vec& p) {
        return dt * psi.value(a, (p - a) / dt) + phi.value(p) - uk.dot(p);
      };
      auto gradient = [&](const Vec& p) {
        return Vec(psi.grad_v(a, (p - a) / dt) + phi.grad(p) - uk);
      };
      x = phi.prox(dt, a + dt * uk);
      if ((x - a).norm() == 0.0) x += Vec::Constant(d, 1e-8 * (1.0 + a.norm()));
      double hx = objective(x);
      bool done = false;
      for (int it = 0; it < 200 && !done; ++it) {
        const Vec gr = gradient(x);
        const double scale = 1.0 + uk.norm() + phi.grad(x).norm();
        if (gr.norm() <= 1e-13 * scale) {
          done = true;
          break;
        }
        Vec dir;
        try {
          const Mat h = psi.hessian_vv(a, (x - a) / dt) / dt + phi.hessian(x);
          Eigen::LDLT<Mat> ldlt(h);
          dir = ldlt.solve(-gr);
          if (ldlt.info() != Eigen::Success || !dir.allFinite() || dir.dot(gr) >= 0.0) {
            dir = -gr;
          }
        } catch (const DomainError&) {
          dir = -gr;
        }
        double t = 1.0;
        Vec trial = x + dir;
        double ht = objective(trial);
        while (!(std::isfinite(ht) && ht <= hx + 1e-4 * t * gr.dot(dir)) && t > 1e-14) {
          t *= 0.5;
          trial = x + t * dir;
          ht = objective(trial);
        }
        if (!(ht < hx)) {
          // the decrease is below round-off in the objective: fall back to
          // full steps that still reduce the gradient
          const Vec full = x + dir;
          if (std::isfinite(objective(full)) && gradient(full).norm() < 0.5 * gr.norm()) {
            x = full;
            hx = objective(full);
            continue;
          }
          done = gr.norm() <= 1e-9 * scale;
          break;
        }
        x = std::move(trial);
        hx = ht;
      }
      if (!done) {
        throw SolverError("forward_solve_rate: inner minimization failed on step " +
                          std::to_string(k));
      }
    }
    nodes.row(k + 1) = x.transpose();
    a = x;
  }
  return Trajectory(g, std::move(nodes));
}

Trajectory forward_solve_rate(const ForwardProblem& fp) {
  if (!fp.potential || !fp.rate) {
    throw std::invalid_argument("forward_solve_rate: potential and rate required");
  }
  return forward_solve_rate(*fp.potential, *fp.rate, fp.y0, fp.u);
}

Control rate_auxiliary(const RatePotential& psi, const Trajectory& y) {
  const TimeGrid& g = y.grid();
  Mat w(g.intervals(), y.dim());
  for (int k = 0; k < g.intervals(); ++k) {
    const Vec m = 0.5 * (y.node(k) + y.node(k + 1));
    w.row(k) = psi.grad_v(m, slope(y, k)).transpose();
  }
  return Control(g, std::move(w));
}

// ---------------------------------------------------------------- linear

LinearClosedForm::LinearClosedForm(double eps, double u0) : eps_(eps), u0_(u0) {
  if (!(eps > 0.0)) throw std::invalid_argument("closed form: eps must be positive");
  if (!std::isfinite(u0)) throw std::invalid_argument("closed form: u0 must be finite");
  const double e = std::exp(1.0);
  alpha_ = std::sqrt(1.0 + eps);
  k_ = 2.0 * u0 / eps + 1.0;
  const double a = alpha_;
  c1_ = (u0 / e + (1.0 + a) * std::exp(a) * 2.0 * u0 / eps) /
        ((1.0 - a) * std::exp(-a) - (1.0 + a) * std::exp(a));
  c2_ = -2.0 * u0 / eps - c1_;
}

double LinearClosedForm::y(double t) const {
  return c1_ * std::exp(-alpha_ * t) + c2_ * std::exp(alpha_ * t) + k_ * std::exp(-t);
}

double LinearClosedForm::dy(double t) const {
  return -alpha_ * c1_ * std::exp(-alpha_ * t) + alpha_ * c2_ * std::exp(alpha_ * t) -
         k_ * std::exp(-t);
}

double LinearClosedForm::ddy(double t) const {
  const double a2 = alpha_ * alpha_;
  return a2 * c1_ * std::exp(-alpha_ * t) + a2 * c2_ * std::exp(alpha_ * t) +
         k_ * std::exp(-t);
}

Trajectory LinearClosedForm::sample(const TimeGrid& grid) const {
  return sample_function(grid, [this](double t) { return y(t); });
}

double LinearClosedForm::gamma() {
  const double e2 = std::exp(-2.0);
  return 0.125 - 0.625 * e2;
}

double LinearClosedForm::value() const {
  const double eps = eps_;
  const double u0 = u0_;
  const double a = alpha_;
  const double c1 = c1_;
  const double c2 = c2_;
  const double k = k_;
  const double e = std::exp(1.0);
  double v = (c1 * c1 / 2 + c1 * c1 / (2 * eps) + a * a * c1 * c1 / (2 * eps)) *
             (std::exp(-2 * a) - 1) / (-2 * a);
  v += (c2 * c2 / 2 + c2 * c2 / (2 * eps) + a * a * c2 * c2 / (2 * eps)) *
       (std::exp(2 * a) - 1) / (2 * a);
  v += (2 * u0 * u0 / (eps * eps) + k * k / (2 * eps) + (k + u0) * (k + u0) / (2 * eps) -
        u0 / eps * k) *
       (std::exp(-2.0) - 1) / (-2.0);
  v += (2 * c1 * u0 / eps + c1 / eps * k + a * c1 / eps * (k + u0) - c1 * u0 / eps) *
       (std::exp(-a - 1) - 1) / (-a - 1);
  v += (2 * c2 * u0 / eps + c2 / eps * k - a * c2 / eps * (k + u0) - c2 * u0 / eps) *
       (std::exp(a - 1) - 1) / (a - 1);
  const double yT = c1 * std::exp(-a) + c2 * std::exp(a) + k / e;
  v += (1 + 1 / eps - a * a / eps) * c1 * c2 + yT * yT / (2 * eps) - 1 / (2 * eps);
  v += gamma() * (u0 - 1) * (u0 - 1);
  return v;
}

LinearClosedForm linear_closed_form_solution(double eps, double u0) {
  return LinearClosedForm(eps, u0);
}

// ---------------------------------------------------------------- shooting

namespace {

struct ShotState {
  double y, dy, z, dz;  // solution and sensitivity to s
};

ShotState shoot_rhs(const ShotState& s, double u, double eps_f) {
  const double y = s.y;
  const double y2 = y * y;
  const double acc = 3.0 * (y2 * y - u) * y2 + eps_f * (y - 1.0);
  const double jac = 15.0 * y2 * y2 - 6.0 * u * y + eps_f;
  return {s.dy, acc, s.dz, jac * s.z};
}

ShotState axpy(const ShotState& a, double h, const ShotState& b) {
  return {a.y + h * b.y, a.dy + h * b.dy, a.z + h * b.z, a.dz + h * b.dz};
}

// Integrates from t = 0 to 1 with n RK4 steps; records y at every
// `stride`-th step when `nodes` is given.
ShotState integrate_shot(double s, double u, double eps_f, int n, int stride,
                         std::vector<double>* nodes) {
  ShotState st{1.0, s, 0.0, 1.0};
  const double h = 1.0 / n;
  if (nodes) nodes->push_back(st.y);
  for (int i = 0; i < n; ++i) {
    const ShotState k1 = shoot_rhs(st, u, eps_f);
    const ShotState k2 = shoot_rhs(axpy(st, 0.5 * h, k1), u, eps_f);
    const ShotState k3 = shoot_rhs(axpy(st, 0.5 * h, k2), u, eps_f);
    const ShotState k4 = shoot_rhs(axpy(st, h, k3), u, eps_f);
    st.y += h / 6.0 * (k1.y + 2 * k2.y + 2 * k3.y + k4.y);
    st.dy += h / 6.0 * (k1.dy + 2 * k2.dy + 2 * k3.dy + k4.dy);
    st.z += h / 6.0 * (k1.z + 2 * k2.z + 2 * k3.z + k4.z);
    st.dz += h / 6.0 * (k1.dz + 2 * k2.dz + 2 * k3.dz + k4.dz);
    if (!std::isfinite(st.y) || std::abs(st.y) > 1e100) {
      st.y = std::numeric_limits<double>::quiet_NaN();
      return st;
    }
    if (nodes && (i + 1) % stride == 0) nodes->push_back(st.y);
  }
  return st;
}

}  // namespace

ShootingResult shoot_el_nonlinear(double eps, double u, bool include_F_term,
                                  const TimeGrid& grid, const ShootingOptions& opts) {
  if (include_F_term && !(eps > 0.0)) {
    throw std::invalid_argument("shooting: eps must be positive");
  }
  if (!std::isfinite(u)) throw std::invalid_argument("shooting: u must be finite");
  if (grid.horizon() != 1.0) throw std::invalid_argument("shooting: horizon must be 1");
  const double eps_f = include_F_term ? eps : 0.0;
  const int n_int = grid.intervals();
  const int stride = std::max(1, (opts.substeps + n_int - 1) / n_int);
  const int steps = stride * n_int;

  auto residual = [&](double s, double* dr) {
    const ShotState st = integrate_shot(s, u, eps_f, steps, stride, nullptr);
    if (!std::isfinite(st.y)) return std::numeric_limits<double>::infinity();
    const double r = st.dy + st.y * st.y * st.y - u;
    if (dr) *dr = st.dz + 3.0 * st.y * st.y * st.z;
    return r;
  };

  std::vector<ShootingLogRow> log;
  const double starts[5] = {u - 1.0, 0.0, -1.0, 1.0, u - 2.0};
  bool ok = false;
  double s_best = 0.0, r_best = 0.0;
  int iters = 0;
  for (int restart = 0; restart < 5 && !ok; ++restart) {
    double s = starts[restart];
    double dr = 0.0;
    double r = residual(s, &dr);
    for (int it = 0; it <= opts.max_iterations; ++it) {
      log.push_back({restart, it, s, r});
      ++iters;
      if (!std::isfinite(r)) break;
      if (std::abs(r) <= opts.tolerance) {
        ok = true;
        s_best = s;
        r_best = r;
        break;
      }
      if (it == opts.max_iterations || dr == 0.0 || !std::isfinite(dr)) break;
      const double step = -r / dr;
      double t = 1.0;
      double dr_new = 0.0;
      double r_new = residual(s + step, &dr_new);
      while (!(std::isfinite(r_new) && r_new * r_new <= (1.0 - 1e-4 * t) * r * r) &&
             t > 1e-8) {
        t *= 0.5;
        r_new = residual(s + t * step, &dr_new);
      }
      if (!std::isfinite(r_new)) break;
      s += t * step;
      r = r_new;
      dr = dr_new;
    }
  }

  if (!opts.log_path.empty()) {
    std::ofstream f(opts.log_path, std::ios::binary);
    if (!f) throw Error("cannot open " + opts.log_path + " for writing");
    f << "restart,iteration,slope,residual\n";
    for (const auto& row : log) {
      f << row.restart << ',' << row.iteration << ',' << format_double(row.slope) << ','
        << format_double(row.residual) << '\n';
    }
  }
  if (!ok) {
    throw SolverError("shooting: Newton failed after 5 restart slopes");
  }

  std::vector<double> values;
  integrate_shot(s_best, u, eps_f, steps, stride, &values);
  Mat nodes(n_int + 1, 1);
  for (int k = 0; k <= n_int; ++k) nodes(k, 0) = values[k];
  return ShootingResult{Trajectory(grid, std::move(nodes)), s_best, r_best, iters,
                        std::move(log)};
}

}  // namespace varpen
