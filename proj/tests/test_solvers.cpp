#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "varpen/config.hpp"
#include "varpen/functionals.hpp"
#include "varpen/optimize.hpp"
#include "varpen/solvers.hpp"

using namespace varpen;

namespace {
Vec v1(double x) { return Vec::Constant(1, x); }
}  // namespace

TEST_CASE("forward_solve") {
  SUBCASE("quadratic converges to the exact solution") {
    double prev = 0.0;
    for (int n : {100, 200, 400}) {
      const TimeGrid g(1.0, n);
      const Control u = sample_control(g, [](double t) { return 0.7 * std::exp(-t); });
      const Trajectory y = forward_solve(*make_quadratic(1.0), v1(1.0), u);
      double err = 0.0;
      for (int k = 0; k <= n; ++k) {
        const double t = g.time(k);
        err = std::max(err, std::abs(y.node(k)(0) - std::exp(-t) * (1.0 + 0.7 * t)));
      }
      if (prev > 0.0) CHECK(prev / err == doctest::Approx(2.0).epsilon(0.1));
      prev = err;
    }
  }
  SUBCASE("equilibrium stays put") {
    const TimeGrid g(1.0, 50);
    const Trajectory y = forward_solve(*make_quartic(), v1(0.0), Control::constant(g, v1(0.0)));
    CHECK(y.nodes().cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("implicit Euler dissipation estimate") {
    const TimeGrid g(1.0, 40);
    const auto q = make_quartic();
    const Trajectory y = forward_solve(*q, v1(2.0), Control::constant(g, v1(0.0)));
    for (int k = 0; k < 40; ++k) {
      const double step = (y.node(k + 1) - y.node(k)).squaredNorm() / g.dt();
      CHECK(q->value(y.node(k + 1)) + step <= q->value(y.node(k)) + 1e-14);
    }
  }
  SUBCASE("deterministic") {
    const TimeGrid g(1.0, 64);
    const Control u = sample_control(g, [](double t) { return std::sin(5 * t); });
    const Trajectory a = forward_solve(*make_quartic(), v1(1.0), u, Scheme::Midpoint);
    const Trajectory b = forward_solve(*make_quartic(), v1(1.0), u, Scheme::Midpoint);
    CHECK((a.nodes() - b.nodes()).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("midpoint scheme is second order") {
    double prev = 0.0;
    for (int n : {50, 100, 200}) {
      const TimeGrid g(1.0, n);
      // y' + y = sin 3t, y(0) = 1
      const Control u = sample_control(g, [](double t) { return std::sin(3.0 * t); });
      const Trajectory y = forward_solve(*make_quadratic(1.0), v1(1.0), u, Scheme::Midpoint);
      const double exact = 1.3 * std::exp(-1.0) + (std::sin(3.0) - 3.0 * std::cos(3.0)) / 10.0;
      const double err = std::abs(y.terminal()(0) - exact);
      if (prev > 0.0) CHECK(prev / err == doctest::Approx(4.0).epsilon(0.1));
      prev = err;
    }
  }
  SUBCASE("midpoint falls back to implicit Euler for nonsmooth potentials") {
    const TimeGrid g(1.0, 4);
    const Control u = Control::constant(g, v1(0.2));
    const Trajectory a = forward_solve(AbsPotential(1.0), v1(1.0), u, Scheme::Midpoint);
    const Trajectory b = forward_solve(AbsPotential(1.0), v1(1.0), u);
    CHECK((a.nodes() - b.nodes()).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("forward_solve_rate") {
  SUBCASE("quadratic rate reproduces implicit Euler") {
    const TimeGrid g(1.0, 100);
    const Control u = sample_control(g, [](double t) { return std::cos(3 * t); });
    const Trajectory a = forward_solve(*make_quartic(), v1(1.0), u);
    const Trajectory b = forward_solve_rate(*make_quartic(), *make_power_rate(2.0, 1.0), v1(1.0), u);
    CHECK((a.nodes() - b.nodes()).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SUBCASE("p = 4 approaches the equilibrium monotonically") {
    const TimeGrid g(1.0, 400);
    const Trajectory y = forward_solve_rate(*make_quadratic(1.0), *make_power_rate(4.0, 1.0), v1(0.0),
                                            Control::constant(g, v1(1.0)));
    for (int k = 0; k < 400; ++k) {
      CHECK(y.node(k + 1)(0) > y.node(k)(0));
      CHECK(y.node(k + 1)(0) < 1.0);
    }
  }
  SUBCASE("self-convergence order") {
    auto terminal = [](int n) {
      const TimeGrid g(1.0, n);
      return forward_solve_rate(*make_quadratic(1.0), *make_power_rate(4.0, 1.0), v1(0.0),
                                Control::constant(g, v1(1.0)))
          .terminal()(0);
    };
    const double a = terminal(100), b = terminal(200), c = terminal(400);
    CHECK(std::log2(std::abs(a - b) / std::abs(b - c)) >= 0.9);
  }
}

TEST_CASE("linear closed form") {
  SUBCASE("ODE and boundary residuals") {
    const LinearClosedForm lc(0.5, 0.3);
    CHECK(lc.alpha() == doctest::Approx(std::sqrt(1.5)));
    CHECK(lc.c1() + lc.c2() + 2 * 0.3 / 0.5 == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(lc.y(0.0) == doctest::Approx(1.0).epsilon(1e-14));
    double res = 0.0;
    for (int i = 0; i < 100; ++i) {
      const double t = i / 99.0;
      res = std::max(res, std::abs(lc.ddy(t) - 1.5 * lc.y(t) + (2 * 0.3 + 0.5) * std::exp(-t)));
    }
    CHECK(res <= 1e-10);
    CHECK(std::abs(lc.dy(1.0) + lc.y(1.0) - 0.3 / std::exp(1.0)) <= 1e-10);
  }
  SUBCASE("formula value against the discretized functional") {
    const Problem pb = linear_problem(PenaltyKind::BEN, 1.0, 2000);
    const TimeGrid g(1.0, 2000);
    const LinearClosedForm lc(1.0, 0.5);
    const Control u = sample_control(g, [](double t) { return 0.5 * std::exp(-t); });
    const Trajectory y = lc.sample(g);
    const double discrete = eval_F(pb.F, u, y) + eval_G_BEN(pb.spec, u, y).total / 1.0;
    CHECK(std::abs(lc.value() - discrete) <= 1e-4);
  }
  SUBCASE("minimizers approach 0.5") {
    double prev_gap = 1.0;
    double prev_min = 0.0;
    for (double eps : {2.0, 1.0, 0.5, 0.1}) {
      double best_u = 0.0, best = 1e300;
      for (int i = 0; i <= 10000; ++i) {
        const double u0 = i / 10000.0;
        const double v = LinearClosedForm(eps, u0).value();
        if (v < best) {
          best = v;
          best_u = u0;
        }
      }
      CHECK(std::abs(best_u - 0.5) < prev_gap);
      CHECK(best > prev_min);
      prev_gap = std::abs(best_u - 0.5);
      prev_min = best;
    }
    CHECK(prev_min < 0.125 / 2 - 5.0 / (16.0 * std::exp(2.0)));
  }
  CHECK_THROWS(LinearClosedForm(0.0, 0.5));
}

TEST_CASE("shooting") {
  SUBCASE("literal equation with u = 1 gives y = 1") {
    const ShootingResult r = shoot_el_nonlinear(0.1, 1.0, false, TimeGrid(1.0, 100));
    CHECK((r.y.nodes().array() - 1.0).abs().maxCoeff() <= 1e-10);
    CHECK(std::abs(r.residual) <= 1e-10);
  }
  SUBCASE("penalized minimizer agrees with the F-term variant") {
    // E_eps with the state minimized for fixed u: the Euler-Lagrange system of
    // the DG penalty of y' + y^3 = u plus the tracking term
    const double eps = 0.1, u = 1.016;
    const TimeGrid g(1.0, 400);
    const ShootingResult r = shoot_el_nonlinear(eps, u, true, g);
    CHECK(std::abs(r.residual) <= 1e-10);
    const Problem pb = quartic_problem(PenaltyKind::DG, 400);
    const Vec c = v1(u);
    const MinimizeResult m = minimize_state(pb.F, pb.spec, eps, pb.space, g, c);
    const Control uc = Control::constant(g, c);
    const double e_shoot = eval_F(pb.F, uc, r.y, &c) + eval_G(pb.spec, uc, r.y).total / eps;
    CHECK(std::abs(e_shoot - m.report.E) <= 1e-4);
  }
  SUBCASE("log file") {
    ShootingOptions o;
    o.log_path = (std::filesystem::temp_directory_path() / "varpen_shoot.log.csv").string();
    shoot_el_nonlinear(0.5, 1.5, true, TimeGrid(1.0, 50), o);
    std::ifstream in(o.log_path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "restart,iteration,slope,residual");
    std::filesystem::remove(o.log_path);
  }
  CHECK_THROWS(shoot_el_nonlinear(0.1, 1.0, false, TimeGrid(2.0, 10)));
}
