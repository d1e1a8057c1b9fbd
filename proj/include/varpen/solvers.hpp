#pragma once

#include <string>
#include <vector>

#include "varpen/convex.hpp"
#include "varpen/core.hpp"

namespace varpen {

enum class Scheme {
  ImplicitEuler,  // y_{k+1} = prox(dt, y_k + dt u_k)
  Midpoint,       // (y_{k+1} - y_k)/dt + averaged gradient = u_k, second order;
                  // implicit Euler is used for nonsmooth potentials
};

struct ForwardProblem {
  PotentialPtr potential;
  RatePotentialPtr rate;  // only for forward_solve_rate
  Vec y0;
  Control u;
  Scheme scheme = Scheme::ImplicitEuler;
};

// y' + dphi(y) = u, y(0) = y0.
Trajectory forward_solve(const ForwardProblem& fp);
Trajectory forward_solve(const Potential& phi, const Vec& y0, const Control& u,
                         Scheme scheme = Scheme::ImplicitEuler);

// d_v psi(y, y') + dphi(y) = u by minimizing movements:
// y_{k+1} = argmin dt psi(y_k, (x - y_k)/dt) + phi(x) - <u_k, x>.
Trajectory forward_solve_rate(const ForwardProblem& fp);
Trajectory forward_solve_rate(const Potential& phi, const RatePotential& psi,
                              const Vec& y0, const Control& u);

// w_k = d_v psi(y_mid, v_k), the auxiliary variable of the doubly nonlinear
// BEN functional along a trajectory.
Control rate_auxiliary(const RatePotential& psi, const Trajectory& y);

// Optimality system of the linear example: for u(t) = u0 e^{-t} and
// phi = y^2/2 the penalized minimizer in y solves
//   y'' - (1 + eps) y = -(2 u0 + eps) e^{-t},  y(0) = 1,  y'(1) + y(1) = u0/e.
class LinearClosedForm {
 public:
  LinearClosedForm(double eps, double u0);

  double eps() const { return eps_; }
  double u0() const { return u0_; }
  double alpha() const { return alpha_; }
  double c1() const { return c1_; }
  double c2() const { return c2_; }

  double y(double t) const;
  double dy(double t) const;
  double ddy(double t) const;
  Trajectory sample(const TimeGrid& grid) const;

  // E_eps(u0 e^{-t}, y) in closed form.
  double value() const;

  // 1/2 int_0^1 t^2 e^{-2t} dt
  static double gamma();

 private:
  double eps_;
  double u0_;
  double alpha_;
  double c1_;
  double c2_;
  double k_;  // 2 u0 / eps + 1
};

LinearClosedForm linear_closed_form_solution(double eps, double u0);

struct ShootingOptions {
  int substeps = 2000;    // RK4 steps over [0, 1]
  int max_iterations = 50;
  double tolerance = 1e-10;
  std::string log_path;   // iterates and residuals, written when non-empty
};

struct ShootingLogRow {
  int restart = 0;
  int iteration = 0;
  double slope = 0.0;
  double residual = 0.0;
};

struct ShootingResult {
  Trajectory y;
  double slope = 0.0;       // y'(0)
  double residual = 0.0;    // y'(1) + y(1)^3 - u
  int iterations = 0;
  std::vector<ShootingLogRow> log;
};

// -y'' + 3 (y^3 - u) y^2 [+ eps (y - 1)] = 0 on (0, 1), y(0) = 1,
// y'(1) + y(1)^3 = u, by damped Newton on s = y'(0).
ShootingResult shoot_el_nonlinear(double eps, double u, bool include_F_term,
                                  const TimeGrid& grid,
                                  const ShootingOptions& opts = {});

}  // namespace varpen
