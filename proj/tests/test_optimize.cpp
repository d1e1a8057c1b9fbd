#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "varpen/config.hpp"
#include "varpen/optimize.hpp"

using namespace varpen;

namespace {

Vec v1(double x) { return Vec::Constant(1, x); }

// argmin over [0, 1] of the closed-form penalized value, by dense scan and
// golden refinement
double closed_form_argmin(double eps) {
  auto f = [eps](double u) { return LinearClosedForm(eps, u).value(); };
  double best = 0.0;
  for (int i = 0; i <= 1000; ++i) {
    if (f(i / 1000.0) < f(best)) best = i / 1000.0;
  }
  double lo = std::max(0.0, best - 1e-3), hi = std::min(1.0, best + 1e-3);
  for (int i = 0; i < 100; ++i) {
    const double a = lo + (hi - lo) / 3, b = hi - (hi - lo) / 3;
    if (f(a) < f(b)) {
      hi = b;
    } else {
      lo = a;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("control spaces") {
  const TimeGrid g(1.0, 4);
  const ControlSpace e = ControlSpace::exponential_decay();
  CHECK(e.is_param());
  CHECK(e.unknowns(g) == 1);
  const Control u = e.realize(g, v1(0.5));
  CHECK(u.value(0)(0) == doctest::Approx(0.5 * std::exp(-0.125)));
  CHECK(e.project(g, v1(3.0))(0) == 1.0);
  const ControlSpace c = ControlSpace::constant();
  CHECK(c.lower(g)(0) == -10.0);
  CHECK(c.upper(g)(0) == 10.0);
  const ControlSpace f = ControlSpace::free_nodal(2, -1.0, 1.0);
  CHECK(f.unknowns(g) == 8);
  CHECK_THROWS(ControlSpace::free_nodal(1, 1.0, -1.0));
  CHECK_THROWS(ControlSpace::param_family({[](double) { return v1(1.0); }}, v1(1.0), v1(0.0)));
}

TEST_CASE("minimize_penalized on the linear example") {
  const Problem pb = linear_problem(PenaltyKind::BEN, 1.0, 400);
  const TimeGrid g(1.0, 400);
  SUBCASE("eps = 0.1 matches the closed-form argmin") {
    const MinimizeResult r = minimize_penalized(pb.F, pb.spec, 0.1, pb.space, g);
    CHECK(r.report.converged);
    CHECK(std::abs(r.control(0) - closed_form_argmin(0.1)) <= 0.03);
    CHECK(r.report.projected_gradient <= 1e-8 * (1.0 + std::abs(r.report.E)));
    for (std::size_t i = 1; i < r.report.history.size(); ++i) {
      CHECK(r.report.history[i] <= r.report.history[i - 1]);
    }
    CHECK(r.report.E <= r.report.history.front());
  }
  SUBCASE("huge eps recovers the F-only optimum projected onto the box") {
    // with G dropped, F is minimized by y = e^{-t} and u = e^{-t}: u0 = 1
    const MinimizeResult r = minimize_penalized(pb.F, pb.spec, 1e6, pb.space, g);
    CHECK(r.control(0) == doctest::Approx(1.0).epsilon(1e-4));
  }
  SUBCASE("objective scaling leaves the minimizer unchanged") {
    MinimizeOptions o;
    const MinimizeResult a = minimize_penalized(pb.F, pb.spec, 0.5, pb.space, g, o);
    o.objective_scale = 10.0;
    const MinimizeResult b = minimize_penalized(pb.F, pb.spec, 0.5, pb.space, g, o);
    CHECK(std::abs(a.control(0) - b.control(0)) <= 1e-6);
  }
  SUBCASE("quasi-Newton and spectral policies reach the same minimum") {
    const MinimizeResult ref = minimize_penalized(pb.F, pb.spec, 1.0, pb.space, g);
    for (StepPolicy p : {StepPolicy::LBFGS, StepPolicy::Spectral}) {
      MinimizeOptions o;
      o.policy = p;
      o.max_iterations = 20000;
      o.gtol = 1e-7;
      const MinimizeResult r = minimize_penalized(pb.F, pb.spec, 1.0, pb.space, g, o);
      CHECK(r.report.E == doctest::Approx(ref.report.E).epsilon(1e-6));
      CHECK(std::abs(r.control(0) - ref.control(0)) <= 1e-3);
    }
  }
  SUBCASE("iteration cap keeps the best point") {
    MinimizeOptions o;
    o.policy = StepPolicy::Spectral;
    o.max_iterations = 3;
    const MinimizeResult r = minimize_penalized(pb.F, pb.spec, 1.0, pb.space, g, o);
    CHECK_FALSE(r.report.converged);
    CHECK(r.report.E <= r.report.history.front());
  }
  CHECK_THROWS(minimize_penalized(pb.F, pb.spec, 0.0, pb.space, g));
}

TEST_CASE("minimize_penalized on the quartic example") {
  const Problem pb = quartic_problem(PenaltyKind::DG, 400);
  const TimeGrid g(1.0, 400);
  const MinimizeResult r = minimize_penalized(pb.F, pb.spec, 0.05, pb.space, g);
  CHECK(r.report.converged);
  // the reference optimum of the same problem (eps = 0)
  const ReferenceResult ref = solve_reference(pb.F, pb.spec, pb.space, 1.0);
  CHECK(std::abs(r.control(0) - ref.params(0)) <= 0.05);
  CHECK(std::abs(r.report.E - ref.F) <= 0.02);
}

TEST_CASE("alternate minimization") {
  const Problem pb = linear_problem(PenaltyKind::BEN, 1.0, 400);
  const TimeGrid g(1.0, 400);
  SUBCASE("monotone and in agreement with joint minimization") {
    const MinimizeResult a = alternate_minimize_ben(pb.F, pb.spec, 0.5, pb.space, g);
    for (std::size_t i = 1; i < a.report.history.size(); ++i) {
      CHECK(a.report.history[i] <= a.report.history[i - 1] + 1e-15);
    }
    const MinimizeResult j = minimize_penalized(pb.F, pb.spec, 0.5, pb.space, g);
    CHECK(std::abs(a.report.E - j.report.E) <= 1e-6);
  }
  SUBCASE("y-step with frozen u0 = 0.5 gives the closed-form solution") {
    const MinimizeResult r = minimize_state(pb.F, pb.spec, 1.0, pb.space, g, v1(0.5));
    const LinearClosedForm lc(1.0, 0.5);
    double err = 0.0;
    for (int k = 0; k <= 400; ++k) err = std::max(err, std::abs(r.y.node(k)(0) - lc.y(g.time(k))));
    CHECK(err <= 1e-3);
  }
  SUBCASE("rejects DG") {
    const Problem q = quartic_problem();
    CHECK_THROWS(alternate_minimize_ben(q.F, q.spec, 0.5, q.space, g));
  }
}

TEST_CASE("solve_reference") {
  SUBCASE("linear example") {
    const Problem pb = linear_problem();
    const ReferenceResult r = solve_reference(pb.F, pb.spec, pb.space, 1.0);
    CHECK(r.params(0) == doctest::Approx(0.5).epsilon(1e-4));
    CHECK(r.F == doctest::Approx(1.0 / 16 - 5.0 / (16 * std::exp(2.0))).epsilon(1e-4));
  }
  SUBCASE("degenerate F with only a parameter penalty clamps p_ref") {
    Problem pb = quartic_problem();
    pb.F = TargetFunctional{};
    pb.F.param_weight = 1.0;
    pb.F.param_ref = v1(5.0);
    ReferenceOptions o;
    o.intervals = 50;
    CHECK(solve_reference(pb.F, pb.spec, pb.space, 1.0, o).params(0) == doctest::Approx(3.0).epsilon(1e-9));
    pb.F.param_ref = v1(1.25);
    CHECK(solve_reference(pb.F, pb.spec, pb.space, 1.0, o).params(0) == doctest::Approx(1.25).epsilon(1e-6));
  }
  SUBCASE("two parameters") {
    Problem pb = quartic_problem();
    pb.space = ControlSpace::param_family({[](double) { return v1(1.0); }, [](double t) { return v1(t); }},
                                          Vec::Constant(2, -3.0), Vec::Constant(2, 3.0));
    pb.F = TargetFunctional{};
    pb.F.param_weight = 1.0;
    Vec ref(2);
    ref << 0.5, -1.0;
    pb.F.param_ref = ref;
    ReferenceOptions o;
    o.intervals = 50;
    const ReferenceResult r = solve_reference(pb.F, pb.spec, pb.space, 1.0, o);
    CHECK((r.params - ref).norm() <= 1e-5);
  }
  SUBCASE("free nodal controls are rejected") {
    Problem pb = linear_problem();
    pb.space = ControlSpace::free_nodal(1, 0.0, 1.0);
    CHECK_THROWS_AS(solve_reference(pb.F, pb.spec, pb.space, 1.0), Error);
  }
}

TEST_CASE("epsilon_sweep") {
  const Problem pb = linear_problem(PenaltyKind::BEN, 1.0, 200);
  const TimeGrid g(1.0, 200);
  SweepOptions so;
  so.reference.intervals = 800;
  const SweepReport rep = epsilon_sweep(pb.F, pb.spec, pb.space, g, {2.0, 1.0, 0.5, 0.1}, {}, so);
  REQUIRE(rep.entries.size() == 4);
  CHECK(rep.g_monotone);
  CHECK(rep.g_bounded);
  for (std::size_t i = 1; i < rep.entries.size(); ++i) {
    CHECK(std::abs(rep.entries[i].control(0) - 0.5) <= std::abs(rep.entries[i - 1].control(0) - 0.5));
  }
  CHECK(rep.reference.error.empty());
  CHECK(rep.reference.eps == 0.0);

  SUBCASE("cold and warm starts agree") {
    SweepOptions cold = so;
    cold.warm_start = false;
    cold.jobs = 2;
    const SweepReport c = epsilon_sweep(pb.F, pb.spec, pb.space, g, {2.0, 1.0, 0.5, 0.1}, {}, cold);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(std::abs(c.entries[i].control(0) - rep.entries[i].control(0)) <= 1e-6);
    }
  }
  SUBCASE("csv layout") {
    std::ostringstream os;
    rep.write_csv(os);
    const std::string text = os.str();
    CHECK(text.rfind("eps,param_or_norm_u,E,F,G,iters,converged\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 6);
  }
  CHECK_THROWS(epsilon_sweep(pb.F, pb.spec, pb.space, g, {}));
  CHECK_THROWS(epsilon_sweep(pb.F, pb.spec, pb.space, g, {0.1, 1.0}));
}

TEST_CASE("energy_curve") {
  const Problem pb = linear_problem(PenaltyKind::BEN, 1.0, 100);
  const TimeGrid g(1.0, 100);
  const auto a = energy_curve(pb.F, pb.spec, 0.5, pb.space, g, 21, 1);
  const auto b = energy_curve(pb.F, pb.spec, 0.5, pb.space, g, 21, 3);
  REQUIRE(a.size() == 21);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].E == b[i].E);
  for (std::size_t i = 1; i + 1 < a.size(); ++i) CHECK(a[i - 1].E - 2 * a[i].E + a[i + 1].E > 0.0);
  // the state-minimized value is the closed-form value up to discretization
  for (const auto& p : a) CHECK(p.E == doctest::Approx(LinearClosedForm(0.5, p.param).value()).epsilon(1e-3));
}
