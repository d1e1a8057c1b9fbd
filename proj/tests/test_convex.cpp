#include <doctest.h>

#include <cmath>
#include <random>

#include "varpen/convex.hpp"
#include "varpen/generic.hpp"

using namespace varpen;

namespace {

Vec v1(double x) { return Vec::Constant(1, x); }

// sup_y xi*y - f(y) by golden section on [lo, hi] (f convex).
double sup_oracle(const std::function<double(double)>& f, double xi, double lo, double hi) {
  auto g = [&](double y) { return -(xi * y - f(y)); };
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi, c = b - r * (b - a), d = a + r * (b - a);
  double gc = g(c), gd = g(d);
  for (int i = 0; i < 200; ++i) {
    if (gc < gd) {
      b = d; d = c; gd = gc; c = b - r * (b - a); gc = g(c);
    } else {
      a = c; c = d; gc = gd; d = a + r * (b - a); gd = g(d);
    }
  }
  return -g(0.5 * (a + b));
}

double bisect(const std::function<double(double)>& f, double a, double b) {
  for (int i = 0; i < 200; ++i) {
    const double m = 0.5 * (a + b);
    (f(a) * f(m) <= 0.0 ? b : a) = m;
  }
  return 0.5 * (a + b);
}

// log cosh, relying on the numeric conjugate and prox.
class LogCosh final : public Potential {
 public:
  LogCosh() : Potential(1) {}
  std::string name() const override { return "logcosh"; }
  double value(const Vec& y) const override {
    const double a = std::abs(y(0));
    return a + std::log1p(std::exp(-2.0 * a)) - std::log(2.0);
  }
  Vec grad(const Vec& y) const override { return v1(std::tanh(y(0))); }
  Mat hessian(const Vec& y) const override {
    const double t = std::tanh(y(0));
    return Mat::Constant(1, 1, 1.0 - t * t);
  }
};

std::vector<PotentialPtr> builtins() {
  return {make_quadratic(1.0), make_quadratic(2.5, 2), make_quartic(),
          std::make_shared<PowerPotential>(3.0, 0.7, 2),
          std::make_shared<AbsPotential>(1.0)};
}

}  // namespace

TEST_CASE("fenchel_gap examples") {
  CHECK(fenchel_gap(*make_quadratic(1.0), v1(1.0), v1(1.0)) == doctest::Approx(0.0));
  CHECK(fenchel_gap(*make_quadratic(1.0), v1(1.0), v1(0.0)) == doctest::Approx(0.5));
  CHECK(std::abs(fenchel_gap(*make_quartic(), v1(1.0), v1(1.0))) < 1e-12);
  // quartic conjugate against a 1-D maximization oracle
  const auto q = make_quartic();
  for (double xi : {-2.0, -0.3, 0.5, 1.7}) {
    const double oracle = sup_oracle([](double y) { return std::pow(y, 4) / 4.0; }, xi, -5.0, 5.0);
    CHECK(q->conjugate(v1(xi)) == doctest::Approx(oracle).epsilon(1e-10));
    CHECK(q->conjugate(v1(xi)) == doctest::Approx(0.75 * std::pow(std::abs(xi), 4.0 / 3.0)));
  }
}

TEST_CASE("abs potential has an unbounded-domain conjugate") {
  const AbsPotential a(1.0);
  CHECK(a.conjugate(v1(0.5)) == 0.0);
  CHECK(std::isinf(a.conjugate(v1(1.5))));
  CHECK_THROWS_AS(fenchel_gap(a, v1(0.0), v1(2.0)), DomainError);
}

TEST_CASE("Fenchel-Young on random pairs") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unif(-3.0, 3.0);
  for (const auto& pot : builtins()) {
    const int d = pot->dim();
    for (int i = 0; i < 1000; ++i) {
      Vec y(d), xi(d);
      for (int j = 0; j < d; ++j) {
        y(j) = unif(rng);
        xi(j) = unif(rng);
      }
      const double cj = pot->conjugate(xi);
      if (std::isfinite(cj)) CHECK(pot->value(y) + cj - xi.dot(y) >= -1e-12);
      CHECK(fenchel_gap(*pot, y, pot->grad(y)) <= 1e-10);
    }
  }
}

TEST_CASE("numeric conjugate matches the closed form") {
  const LogCosh lc;
  for (double xi : {-0.9, -0.4, 0.0, 0.3, 0.8}) {
    const double exact = xi * std::atanh(xi) + 0.5 * std::log(1.0 - xi * xi);
    CHECK(lc.conjugate(v1(xi)) == doctest::Approx(exact).epsilon(1e-9));
  }
  CHECK(std::isinf(lc.conjugate(v1(1.5))));
}

TEST_CASE("prox") {
  CHECK(make_quadratic(1.0)->prox(1.0, v1(1.0))(0) == doctest::Approx(0.5));
  CHECK(make_quartic()->prox(1.0, v1(2.0))(0) == doctest::Approx(1.0).epsilon(1e-14));
  const double oracle = bisect([](double x) { return x + 0.01 * x * x * x - 1.1; }, 0.0, 1.1);
  CHECK(make_quartic()->prox(0.01, v1(1.1))(0) == doctest::Approx(oracle).epsilon(1e-13));
  CHECK(std::abs(AbsPotential(1.0).prox(0.5, v1(0.3))(0)) == 0.0);
  CHECK(AbsPotential(1.0).prox(0.5, v1(2.0))(0) == doctest::Approx(1.5));

  SUBCASE("optimality and nonexpansiveness") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> unif(-4.0, 4.0);
    const LogCosh lc;
    std::vector<const Potential*> pots{&lc};
    const auto b = builtins();
    for (const auto& p : b) pots.push_back(p.get());
    for (const Potential* pot : pots) {
      const int d = pot->dim();
      for (int i = 0; i < 100; ++i) {
        Vec z1(d), z2(d);
        for (int j = 0; j < d; ++j) {
          z1(j) = unif(rng);
          z2(j) = unif(rng);
        }
        const double lam = 0.1 + std::abs(unif(rng));
        const Vec x1 = pot->prox(lam, z1);
        const Vec x2 = pot->prox(lam, z2);
        CHECK((x1 - x2).norm() <= (z1 - z2).norm() + 1e-12);
        if (pot->smooth()) {
          CHECK((z1 - x1 - lam * pot->grad(x1)).norm() <= 1e-12 * (1.0 + z1.norm()));
        }
      }
    }
  }
  CHECK_THROWS(make_quadratic(1.0)->prox(0.0, v1(1.0)));
}

TEST_CASE("minimal_section") {
  const AbsPotential a(1.0);
  CHECK(minimal_section(a, 0.0, 0.5) == 0.0);
  CHECK(minimal_section(a, 0.0, 2.0) == doctest::Approx(1.0));
  CHECK(minimal_section(a, 0.0, -3.0) == doctest::Approx(-2.0));
  CHECK(minimal_section(*make_quadratic(1.0), 3.0, 0.0) == doctest::Approx(-3.0));
  CHECK(a.grad(v1(0.0))(0) == 0.0);
}

TEST_CASE("chain_rule_defect") {
  const TimeGrid g(1.0, 10);
  CHECK(chain_rule_defect(*make_quartic(), sample_function(g, [](double) { return 0.7; })) == 0.0);
  double prev = 0.0;
  for (int n : {100, 200}) {
    const double d = chain_rule_defect(*make_quadratic(1.0),
                                       sample_function(TimeGrid(1.0, n), [](double t) { return std::exp(-t); }));
    CHECK(d <= 1e-3);
    if (prev > 0.0) CHECK(prev / d == doctest::Approx(4.0).epsilon(0.05));
    prev = d;
  }
  const double d50 = chain_rule_defect(*make_quartic(), sample_function(TimeGrid(1.0, 50), [](double t) { return 1.0 + t; }));
  const double d100 = chain_rule_defect(*make_quartic(), sample_function(TimeGrid(1.0, 100), [](double t) { return 1.0 + t; }));
  CHECK(d50 / d100 == doctest::Approx(4.0).epsilon(0.05));
}

TEST_CASE("averaged gradient is a discrete gradient") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unif(-2.0, 2.0);
  for (const auto& pot : {make_quadratic(1.3, 2), make_quartic(2)}) {
    for (int i = 0; i < 50; ++i) {
      Vec a(2), b(2);
      a << unif(rng), unif(rng);
      b << unif(rng), unif(rng);
      const Vec g = averaged_gradient(*pot, a, b);
      CHECK(g.dot(b - a) == doctest::Approx(pot->value(b) - pot->value(a)).epsilon(1e-12));
    }
  }
}

TEST_CASE("power rate family") {
  const PowerRate r(3.0, Modulation::sinusoidal(2.0, 0.5, 1), 1);
  const double c = r.growth_constant();
  CHECK(c == doctest::Approx(0.5 * std::min(1.5 / 3.0, std::pow(2.5, 1.0 - 1.5) / 1.5)));
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unif(-3.0, 3.0);
  for (int i = 0; i < 1000; ++i) {
    const Vec y = v1(unif(rng)), v = v1(unif(rng)), w = v1(unif(rng));
    CHECK(r.value(y, v) >= 0.0);
    CHECK(r.value(y, Vec::Zero(1)) == 0.0);
    CHECK(r.value(y, v) + r.conjugate(y, w) >=
          c * std::pow(std::abs(v(0)), 3.0) + c * std::pow(std::abs(w(0)), 1.5) - 1e-12);
    CHECK(rate_fenchel_gap(r, y, v, w) >= -1e-12);
    CHECK(std::abs(rate_fenchel_gap(r, y, v, r.grad_v(y, v))) <= 1e-10);
  }
  CHECK_THROWS(Modulation::sinusoidal(0.5, 1.0, 1));
  CHECK_THROWS(make_power_rate(1.0, 1.0));
}

TEST_CASE("oscillator entropy potential") {
  const OscillatorEntropyPotential phi(1.0);
  Vec y(3);
  y << 0.3, -1.0, 2.0;
  CHECK(fenchel_gap(phi, y, phi.grad(y)) <= 1e-10);
  Vec outside(3);
  outside << 0.0, 0.0, -1.0;
  CHECK(std::isinf(phi.value(outside)));
}
