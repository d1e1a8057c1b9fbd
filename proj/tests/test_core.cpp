#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "varpen/core.hpp"

using namespace varpen;

namespace {
Vec v1(double x) { return Vec::Constant(1, x); }
}  // namespace

TEST_CASE("time grid") {
  const TimeGrid g(1.0, 10);
  CHECK(g.dt() * g.intervals() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(g.time(10) == 1.0);
  CHECK(g.midpoint(0) == doctest::Approx(0.05));
  CHECK_THROWS(TimeGrid(1.0, 0));
  CHECK_THROWS(TimeGrid(-1.0, 4));
}

TEST_CASE("trajectory and control invariants") {
  const TimeGrid g(1.0, 3);
  CHECK_THROWS(Trajectory(g, Mat::Zero(3, 1)));
  CHECK_THROWS(Control(g, Mat::Zero(4, 1)));
  Mat bad = Mat::Zero(4, 1);
  bad(2, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS(Trajectory(g, bad));
}

TEST_CASE("quad_intervals") {
  SUBCASE("constant integrand measures the interval") {
    CHECK(quad_intervals(TimeGrid(1.0, 10), [](const IntervalSample&) { return 1.0; }) ==
          doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("affine integrand is exact") {
    CHECK(quad_intervals(TimeGrid(1.0, 4), [](const IntervalSample& s) { return s.t_mid; }) ==
          doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("t^2 e^{-t} converges to 2 - 5/e at order 2") {
    const double exact = 2.0 - 5.0 / std::exp(1.0);
    auto f = [](const IntervalSample& s) { return s.t_mid * s.t_mid * std::exp(-s.t_mid); };
    double prev = 0.0;
    for (int n : {50, 100, 200, 400}) {
      const double err = std::abs(quad_intervals(TimeGrid(1.0, n), f) - exact);
      if (prev > 0.0) {
        CHECK(prev / err > 3.5);
        CHECK(prev / err < 4.5);
      }
      prev = err;
    }
    CHECK(prev < 1e-5);
  }
  SUBCASE("linearity") {
    const TimeGrid g(1.0, 37);
    auto f = [](const IntervalSample& s) { return std::sin(3.0 * s.t_mid); };
    auto h = [](const IntervalSample& s) { return std::exp(s.t_mid); };
    const double lhs = quad_intervals(g, [&](const IntervalSample& s) { return 2.5 * f(s) - 0.7 * h(s); });
    CHECK(lhs == doctest::Approx(2.5 * quad_intervals(g, f) - 0.7 * quad_intervals(g, h)).epsilon(1e-14));
  }
  SUBCASE("non-finite integrand names the interval") {
    try {
      quad_intervals(TimeGrid(1.0, 4), [](const IntervalSample& s) {
        return s.index == 2 ? std::numeric_limits<double>::infinity() : 0.0;
      });
      FAIL("expected EvaluationError");
    } catch (const EvaluationError& e) {
      CHECK(std::string(e.what()).find("2") != std::string::npos);
    }
  }
}

TEST_CASE("slope") {
  const TimeGrid g(1.0, 2);
  const Trajectory c = sample_function(g, [](double) { return 3.0; });
  CHECK(slope(c, 0)(0) == 0.0);
  const Trajectory lin = sample_function(g, [](double t) { return t; });
  CHECK(slope(lin, 0)(0) == doctest::Approx(1.0));
  CHECK(slope(lin, 1)(0) == doctest::Approx(1.0));
  CHECK_THROWS(slope(lin, 2));
  CHECK_THROWS(slope(lin, -1));

  // derivative of e^{-t}(1 + t/2) at the midpoints, O(dt^2)
  auto y = [](double t) { return std::exp(-t) * (1.0 + t / 2.0); };
  auto dy = [](double t) { return std::exp(-t) * (-0.5 - t / 2.0); };
  double prev = 0.0;
  for (int n : {100, 200}) {
    const TimeGrid gn(1.0, n);
    const Trajectory tr = sample_function(gn, y);
    double err = 0.0;
    for (int k = 0; k < n; ++k) err = std::max(err, std::abs(slope(tr, k)(0) - dy(gn.midpoint(k))));
    if (prev > 0.0) CHECK(prev / err == doctest::Approx(4.0).epsilon(0.05));
    prev = err;
  }
}

TEST_CASE("sample_function and sample_control") {
  const Trajectory c = sample_function(TimeGrid(1.0, 5), [](double) { return v1(2.0); });
  CHECK(c.nodes().isApproxToConstant(2.0));
  const Trajectory e = sample_function(TimeGrid(1.0, 1), [](double t) { return std::exp(-t); });
  CHECK(e.node(0)(0) == 1.0);
  CHECK(e.node(1)(0) == doctest::Approx(std::exp(-1.0)));
  const Control u = sample_control(TimeGrid(1.0, 4), [](double t) { return t; });
  CHECK(u.value(1)(0) == doctest::Approx(0.375));
  // affine samples give exactly the affine coefficient as slope
  const Trajectory a = sample_function(TimeGrid(2.0, 8), [](double t) { return 0.25 + 1.5 * t; });
  for (int k = 0; k < 8; ++k) CHECK(slope(a, k)(0) == doctest::Approx(1.5).epsilon(1e-14));
}

TEST_CASE("csv round trip") {
  const TimeGrid g(1.0, 7);
  const Trajectory y = sample_function(g, [](double t) {
    Vec v(2);
    v << std::exp(-t) / 3.0, std::sin(t);
    return v;
  });
  std::stringstream ss;
  write_csv(ss, y);
  const std::string text = ss.str();
  CHECK(text.rfind("t,y1,y2\n", 0) == 0);
  CHECK(text.find('\r') == std::string::npos);
  const Trajectory back = read_trajectory_csv(ss);
  CHECK(back.grid() == g);
  CHECK((back.nodes() - y.nodes()).cwiseAbs().maxCoeff() == 0.0);

  std::stringstream us;
  write_csv(us, sample_control(g, [](double t) { return t; }));
  CHECK(us.str().rfind("t_mid,u1\n", 0) == 0);
}
