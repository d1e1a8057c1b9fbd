#include "varpen/convex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace varpen {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string fmt(double x) {
  std::ostringstream os;
  os << x;
  return os.str();
}

// Root of r + a r^{m} = rho on [0, rho] for a > 0, m > 0, rho >= 0, by
// Newton safeguarded with bisection.
double radial_root(double rho, double a, double m) {
  if (rho == 0.0) return 0.0;
  double lo = 0.0;
  double hi = std::min(rho, std::pow(rho / a, 1.0 / m));
  double r = hi;
  for (int it = 0; it < 200; ++it) {
    const double f = r + a * std::pow(r, m) - rho;
    if (std::abs(f) <= 4.0 * std::numeric_limits<double>::epsilon() * rho) {
      return r;
    }
    if (f > 0.0) {
      hi = r;
    } else {
      lo = r;
    }
    const double df = 1.0 + a * m * std::pow(r, m - 1.0);
    double next = r - f / df;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (hi - lo <= 1e-16 * rho) return next;
    r = next;
  }
  return r;
}

}  // namespace

// ---------------------------------------------------------------- Potential

Potential::Potential(int dim) : dim_(dim) {
  if (dim < 1) throw std::invalid_argument("Potential: dimension must be >= 1");
}

void Potential::check_dim(const Vec& v, const char* what) const {
  if (v.size() != dim_) {
    throw std::invalid_argument(name() + "::" + what + ": expected dimension " +
                                std::to_string(dim_) + ", got " +
                                std::to_string(v.size()));
  }
}

Mat Potential::hessian(const Vec&) const {
  throw DomainError(name() + ": no second derivative available");
}

Vec Potential::conjugate_grad(const Vec& xi) const {
  check_dim(xi, "conjugate_grad");
  // Proximal-point ascent on <xi, y> - phi(y): y <- prox_{s phi}(y + s xi).
  Vec y = Vec::Zero(dim_);
  if (!std::isfinite(value(y))) {
    throw DomainError(name() + ": numeric conjugate needs 0 in the domain");
  }
  double step = 1.0;
  for (int it = 0; it < 2000; ++it) {
    Vec next = prox(step, y + step * xi);
    if (!next.allFinite() || next.norm() > 1e12) {
      return Vec::Constant(dim_, kInf);
    }
    const double move = (next - y).norm();
    y = std::move(next);
    if (move <= 1e-13 * (1.0 + y.norm())) return y;
    step = std::min(2.0 * step, 1e15);
  }
  throw SolverError(name() + ": numeric conjugate did not converge");
}

double Potential::conjugate(const Vec& xi) const {
  const Vec y = conjugate_grad(xi);
  if (!y.allFinite()) return kInf;
  return xi.dot(y) - value(y);
}

Vec Potential::prox(double step, const Vec& z) const {
  check_dim(z, "prox");
  if (!(step > 0.0)) throw std::invalid_argument("prox: step must be positive");
  Vec x = z;
  auto objective = [&](const Vec& p) {
    return step * value(p) + 0.5 * (p - z).squaredNorm();
  };
  double hx = objective(x);
  if (!std::isfinite(hx)) {
    throw SolverError(name() + ": prox start point outside the domain");
  }
  const Mat eye = Mat::Identity(dim_, dim_);
  for (int it = 0; it < 100; ++it) {
    const Vec gx = grad(x);
    const Vec r = step * gx + x - z;
    if (r.norm() <= 1e-14 * (1.0 + z.norm() + x.norm() + step * gx.norm())) return x;
    const Mat jac = step * hessian(x) + eye;
    const Vec d = jac.ldlt().solve(-r);
    if (d.norm() <= 1e-15 * (1.0 + x.norm())) return x;
    double t = 1.0;
    Vec trial = x + d;
    double ht = objective(trial);
    // near the solution the decrease is lost in round-off of the objective:
    // take full steps that halve the residual
    if (std::isfinite(ht) && (step * grad(trial) + trial - z).norm() < 0.5 * r.norm()) {
      x = std::move(trial);
      hx = ht;
      continue;
    }
    while (!(std::isfinite(ht) && ht <= hx + 1e-4 * t * r.dot(d) +
                                         1e-15 * std::abs(hx)) &&
           t > 1e-12) {
      t *= 0.5;
      trial = x + t * d;
      ht = objective(trial);
    }
    if (!std::isfinite(ht)) break;
    x = std::move(trial);
    hx = ht;
  }
  throw SolverError(name() + ": prox Newton did not converge in 100 iterations");
}

std::optional<Interval> Potential::subdifferential_interval(double y) const {
  if (dim_ != 1) {
    throw std::invalid_argument(name() +
                                ": subdifferential interval needs d = 1");
  }
  const Vec p = Vec::Constant(1, y);
  if (!std::isfinite(value(p))) return std::nullopt;
  try {
    const double g = grad(p)(0);
    return Interval{g, g};
  } catch (const DomainError&) {
    return std::nullopt;
  }
}

// ---------------------------------------------------------------- Quadratic

QuadraticPotential::QuadraticPotential(double lambda, int dim)
    : Potential(dim), lambda_(lambda) {
  if (!(lambda > 0.0)) {
    throw std::invalid_argument("quadratic: lambda must be positive");
  }
}

std::string QuadraticPotential::name() const {
  return "quadratic(" + fmt(lambda_) + ")";
}

double QuadraticPotential::value(const Vec& y) const {
  check_dim(y, "value");
  return 0.5 * lambda_ * y.squaredNorm();
}

Vec QuadraticPotential::grad(const Vec& y) const {
  check_dim(y, "grad");
  return lambda_ * y;
}

Mat QuadraticPotential::hessian(const Vec& y) const {
  check_dim(y, "hessian");
  return lambda_ * Mat::Identity(dim(), dim());
}

double QuadraticPotential::conjugate(const Vec& xi) const {
  check_dim(xi, "conjugate");
  return xi.squaredNorm() / (2.0 * lambda_);
}

Vec QuadraticPotential::conjugate_grad(const Vec& xi) const {
  check_dim(xi, "conjugate_grad");
  return xi / lambda_;
}

Vec QuadraticPotential::prox(double step, const Vec& z) const {
  check_dim(z, "prox");
  if (!(step > 0.0)) throw std::invalid_argument("prox: step must be positive");
  return z / (1.0 + step * lambda_);
}

// ---------------------------------------------------------------- Power

PowerPotential::PowerPotential(double p, double c, int dim, std::string label)
    : Potential(dim), p_(p), c_(c), q_(p / (p - 1.0)), label_(std::move(label)) {
  if (!(p > 1.0)) throw std::invalid_argument("power: exponent must exceed 1");
  if (!(c > 0.0)) throw std::invalid_argument("power: coefficient must be positive");
}

std::string PowerPotential::name() const {
  if (!label_.empty()) return label_;
  return "power(p=" + fmt(p_) + ", c=" + fmt(c_) + ")";
}

double PowerPotential::value(const Vec& y) const {
  check_dim(y, "value");
  return c_ * std::pow(y.norm(), p_) / p_;
}

Vec PowerPotential::grad(const Vec& y) const {
  check_dim(y, "grad");
  const double r = y.norm();
  if (r == 0.0) return Vec::Zero(dim());
  return c_ * std::pow(r, p_ - 2.0) * y;
}

Mat PowerPotential::hessian(const Vec& y) const {
  check_dim(y, "hessian");
  const double r = y.norm();
  const Mat eye = Mat::Identity(dim(), dim());
  if (r == 0.0) {
    if (p_ > 2.0) return Mat::Zero(dim(), dim());
    if (p_ == 2.0) return c_ * eye;
    throw DomainError(name() + ": Hessian unbounded at 0");
  }
  const Vec n = y / r;
  return c_ * std::pow(r, p_ - 2.0) * (eye + (p_ - 2.0) * n * n.transpose());
}

double PowerPotential::conjugate(const Vec& xi) const {
  check_dim(xi, "conjugate");
  return std::pow(c_, 1.0 - q_) * std::pow(xi.norm(), q_) / q_;
}

Vec PowerPotential::conjugate_grad(const Vec& xi) const {
  check_dim(xi, "conjugate_grad");
  const double r = xi.norm();
  if (r == 0.0) return Vec::Zero(dim());
  return std::pow(c_, 1.0 - q_) * std::pow(r, q_ - 2.0) * xi;
}

Vec PowerPotential::prox(double step, const Vec& z) const {
  check_dim(z, "prox");
  if (!(step > 0.0)) throw std::invalid_argument("prox: step must be positive");
  const double rho = z.norm();
  if (rho == 0.0) return Vec::Zero(dim());
  if (p_ == 2.0) return z / (1.0 + step * c_);
  const double r = radial_root(rho, step * c_, p_ - 1.0);
  return (r / rho) * z;
}

PotentialPtr make_quadratic(double lambda, int dim) {
  return std::make_shared<QuadraticPotential>(lambda, dim);
}

PotentialPtr make_quartic(int dim) {
  return std::make_shared<PowerPotential>(4.0, 1.0, dim, "quartic");
}

// ---------------------------------------------------------------- Abs

AbsPotential::AbsPotential(double c) : Potential(1), c_(c) {
  if (!(c > 0.0)) throw std::invalid_argument("abs: coefficient must be positive");
}

std::string AbsPotential::name() const { return "abs(" + fmt(c_) + ")"; }

double AbsPotential::value(const Vec& y) const {
  check_dim(y, "value");
  return c_ * std::abs(y(0));
}

Vec AbsPotential::grad(const Vec& y) const {
  check_dim(y, "grad");
  // minimal-norm element of c * sign(y)
  if (y(0) == 0.0) return Vec::Zero(1);
  return Vec::Constant(1, y(0) > 0.0 ? c_ : -c_);
}

Mat AbsPotential::hessian(const Vec& y) const {
  check_dim(y, "hessian");
  if (y(0) == 0.0) throw DomainError(name() + ": not differentiable at 0");
  return Mat::Zero(1, 1);
}

double AbsPotential::conjugate(const Vec& xi) const {
  check_dim(xi, "conjugate");
  return std::abs(xi(0)) <= c_ * (1.0 + 1e-12) ? 0.0 : kInf;
}

Vec AbsPotential::conjugate_grad(const Vec& xi) const {
  check_dim(xi, "conjugate_grad");
  if (std::abs(xi(0)) > c_ * (1.0 + 1e-12)) return Vec::Constant(1, kInf);
  return Vec::Zero(1);
}

Vec AbsPotential::prox(double step, const Vec& z) const {
  check_dim(z, "prox");
  if (!(step > 0.0)) throw std::invalid_argument("prox: step must be positive");
  const double t = step * c_;
  const double x = z(0);
  if (x > t) return Vec::Constant(1, x - t);
  if (x < -t) return Vec::Constant(1, x + t);
  return Vec::Zero(1);
}

std::optional<Interval> AbsPotential::subdifferential_interval(double y) const {
  if (y > 0.0) return Interval{c_, c_};
  if (y < 0.0) return Interval{-c_, -c_};
  return Interval{-c_, c_};
}

// ---------------------------------------------------------------- Sum

SumPotential::SumPotential(PotentialPtr base, SmoothTerm perturbation)
    : Potential(base ? base->dim() : 1),
      base_(std::move(base)),
      perturbation_(std::move(perturbation)) {
  if (!base_) throw std::invalid_argument("sum: base potential required");
  if (!perturbation_.value || !perturbation_.grad) {
    throw std::invalid_argument("sum: perturbation needs value and gradient");
  }
}

std::string SumPotential::name() const { return base_->name() + "+smooth"; }

double SumPotential::value(const Vec& y) const {
  check_dim(y, "value");
  const double b = base_->value(y);
  if (!std::isfinite(b)) return b;
  return b + perturbation_.value(y);
}

Vec SumPotential::grad(const Vec& y) const {
  check_dim(y, "grad");
  if (dim() == 1 && !base_->smooth()) {
    // minimal-norm element of the shifted interval
    const auto iv = subdifferential_interval(y(0));
    if (!iv) throw DomainError(name() + ": point outside D(dphi)");
    return Vec::Constant(1, std::clamp(0.0, iv->lo, iv->hi));
  }
  return base_->grad(y) + perturbation_.grad(y);
}

Mat SumPotential::hessian(const Vec& y) const {
  check_dim(y, "hessian");
  if (!perturbation_.hessian) {
    throw DomainError(name() + ": perturbation has no Hessian");
  }
  return base_->hessian(y) + perturbation_.hessian(y);
}

Vec SumPotential::prox(double step, const Vec& z) const {
  check_dim(z, "prox");
  if (!(step > 0.0)) throw std::invalid_argument("prox: step must be positive");
  if (base_->smooth() && perturbation_.hessian) return Potential::prox(step, z);
  if (step * perturbation_.lipschitz >= 1.0) {
    throw SolverError(name() + ": prox needs step * Lipschitz < 1");
  }
  if (dim() == 1) {
    // 0 in x - z + step * dphi(x); the map is strongly monotone.
    auto classify = [&](double x) {
      const auto iv = subdifferential_interval(x);
      if (!iv) return 0;  // treat as undecidable
      const double lo = x - z(0) + step * iv->lo;
      const double hi = x - z(0) + step * iv->hi;
      if (lo > 0.0) return 1;
      if (hi < 0.0) return -1;
      return 2;
    };
    double lo = z(0) - 1.0;
    double hi = z(0) + 1.0;
    for (int i = 0; i < 200 && classify(lo) == 1; ++i) lo -= 2.0 * (hi - lo);
    for (int i = 0; i < 200 && classify(hi) == -1; ++i) hi += 2.0 * (hi - lo);
    for (int it = 0; it < 400; ++it) {
      const double mid = 0.5 * (lo + hi);
      const int c = classify(mid);
      if (c == 2) return Vec::Constant(1, mid);
      if (c == 1) {
        hi = mid;
      } else {
        lo = mid;
      }
      if (hi - lo <= 1e-16 * (1.0 + std::abs(mid))) return Vec::Constant(1, mid);
    }
    return Vec::Constant(1, 0.5 * (lo + hi));
  }
  // forward-backward splitting, a contraction for step * L < 1
  Vec x = z;
  for (int it = 0; it < 10000; ++it) {
    Vec next = base_->prox(step, z - step * perturbation_.grad(x));
    const double move = (next - x).norm();
    x = std::move(next);
    if (move <= 1e-14 * (1.0 + x.norm())) return x;
  }
  throw SolverError(name() + ": forward-backward prox did not converge");
}

std::optional<Interval> SumPotential::subdifferential_interval(double y) const {
  if (dim() != 1) {
    throw std::invalid_argument(name() +
                                ": subdifferential interval needs d = 1");
  }
  auto iv = base_->subdifferential_interval(y);
  if (!iv) return iv;
  const double shift = perturbation_.grad(Vec::Constant(1, y))(0);
  return Interval{iv->lo + shift, iv->hi + shift};
}

// ---------------------------------------------------------------- Oscillator

OscillatorEntropyPotential::OscillatorEntropyPotential(double kappa)
    : Potential(3), kappa_(kappa) {
  if (!(kappa > 0.0)) {
    throw std::invalid_argument("oscillator entropy: kappa must be positive");
  }
}

std::string OscillatorEntropyPotential::name() const {
  return "oscillator_entropy(kappa=" + fmt(kappa_) + ")";
}

double OscillatorEntropyPotential::value(const Vec& y) const {
  check_dim(y, "value");
  if (!(y(2) > 0.0)) return kInf;
  return y(0) - kappa_ * std::log(y(2)) - kappa_;
}

Vec OscillatorEntropyPotential::grad(const Vec& y) const {
  check_dim(y, "grad");
  if (!(y(2) > 0.0)) throw DomainError(name() + ": theta must be positive");
  Vec g(3);
  g << 1.0, 0.0, -kappa_ / y(2);
  return g;
}

Mat OscillatorEntropyPotential::hessian(const Vec& y) const {
  check_dim(y, "hessian");
  if (!(y(2) > 0.0)) throw DomainError(name() + ": theta must be positive");
  Mat h = Mat::Zero(3, 3);
  h(2, 2) = kappa_ / (y(2) * y(2));
  return h;
}

double OscillatorEntropyPotential::conjugate(const Vec& xi) const {
  check_dim(xi, "conjugate");
  const double tol = 1e-12 * (1.0 + xi.norm());
  if (std::abs(xi(0) - 1.0) > tol || std::abs(xi(1)) > tol || !(xi(2) < 0.0)) {
    return kInf;
  }
  return kappa_ * std::log(-kappa_ / xi(2));
}

Vec OscillatorEntropyPotential::conjugate_grad(const Vec& xi) const {
  check_dim(xi, "conjugate_grad");
  if (!std::isfinite(conjugate(xi))) return Vec::Constant(3, kInf);
  Vec y(3);
  y << 0.0, 0.0, -kappa_ / xi(2);
  return y;
}

Vec OscillatorEntropyPotential::prox(double step, const Vec& z) const {
  check_dim(z, "prox");
  if (!(step > 0.0)) throw std::invalid_argument("prox: step must be positive");
  // theta^2 - z3 theta - step kappa = 0, positive root
  const double z3 = z(2);
  const double disc = std::sqrt(z3 * z3 + 4.0 * step * kappa_);
  const double theta =
      z3 >= 0.0 ? 0.5 * (z3 + disc) : 2.0 * step * kappa_ / (disc - z3);
  Vec x(3);
  x << z(0) - step, z(1), theta;
  return x;
}

// ---------------------------------------------------------------- helpers

double fenchel_gap(const Potential& pot, const Vec& y, const Vec& xi) {
  const double v = pot.value(y);
  const double c = pot.conjugate(xi);
  if (!std::isfinite(v)) {
    throw DomainError("fenchel_gap: y outside the essential domain of " +
                      pot.name());
  }
  if (!std::isfinite(c)) {
    throw DomainError("fenchel_gap: xi outside the essential domain of " +
                      pot.name() + "*");
  }
  return v + c - xi.dot(y);
}

double minimal_section(const Potential& pot, double y, double u) {
  if (pot.dim() != 1) {
    throw std::invalid_argument("minimal_section: needs a 1-D potential");
  }
  const auto iv = pot.subdifferential_interval(y);
  if (!iv || iv->lo > iv->hi) {
    throw DomainError("minimal_section: y outside D(dphi)");
  }
  return std::clamp(0.0, u - iv->hi, u - iv->lo);
}

double chain_rule_defect(const Potential& pot, const Trajectory& y) {
  const TimeGrid& g = y.grid();
  double integral = 0.0;
  for (int k = 0; k < g.intervals(); ++k) {
    const Vec mid = 0.5 * (y.node(k) + y.node(k + 1));
    integral += g.dt() * pot.grad(mid).dot(slope(y, k));
  }
  const double increment = pot.value(y.terminal()) - pot.value(y.initial());
  if (!std::isfinite(increment)) {
    throw DomainError("chain_rule_defect: node outside the domain");
  }
  return std::abs(increment - integral);
}

namespace {

struct GaussNode {
  double s;
  double w;
};

constexpr double kGl = 0.38729833462074170;  // sqrt(3/5) / 2
constexpr GaussNode kGauss3[3] = {
    {0.5 - kGl, 5.0 / 18.0}, {0.5, 8.0 / 18.0}, {0.5 + kGl, 5.0 / 18.0}};

}  // namespace

Vec averaged_gradient(const Potential& pot, const Vec& a, const Vec& b) {
  const Vec h = b - a;
  Vec g = Vec::Zero(a.size());
  for (const auto& node : kGauss3) g += node.w * pot.grad(a + node.s * h);
  return g;
}

AveragedGradient averaged_gradient_jacobian(const Potential& pot, const Vec& a,
                                            const Vec& b) {
  const Vec h = b - a;
  const int d = static_cast<int>(a.size());
  AveragedGradient out{Vec::Zero(d), Mat::Zero(d, d), Mat::Zero(d, d)};
  for (const auto& node : kGauss3) {
    const Vec p = a + node.s * h;
    out.g += node.w * pot.grad(p);
    const Mat hess = pot.hessian(p);
    out.d_a += node.w * (1.0 - node.s) * hess;
    out.d_b += node.w * node.s * hess;
  }
  return out;
}

// ---------------------------------------------------------------- rates

Modulation Modulation::constant_value(double beta, int dim) {
  if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
  Modulation m;
  m.label = fmt(beta);
  m.value = [beta](const Vec&) { return beta; };
  m.grad = [dim](const Vec&) { return Vec::Zero(dim); };
  m.lower = beta;
  m.upper = beta;
  m.constant = true;
  return m;
}

Modulation Modulation::sinusoidal(double beta0, double beta1, int dim) {
  if (!(beta0 > std::abs(beta1))) {
    throw std::invalid_argument("beta0 + beta1 sin(y1) needs beta0 > |beta1|");
  }
  Modulation m;
  m.label = fmt(beta0) + "+" + fmt(beta1) + "sin(y1)";
  m.value = [beta0, beta1](const Vec& y) { return beta0 + beta1 * std::sin(y(0)); };
  m.grad = [beta1, dim](const Vec& y) {
    Vec g = Vec::Zero(dim);
    g(0) = beta1 * std::cos(y(0));
    return g;
  };
  m.lower = beta0 - std::abs(beta1);
  m.upper = beta0 + std::abs(beta1);
  m.constant = beta1 == 0.0;
  return m;
}

RatePotential::RatePotential(int dim) : dim_(dim) {
  if (dim < 1) throw std::invalid_argument("RatePotential: dimension must be >= 1");
}

PowerRate::PowerRate(double p, Modulation beta, int dim)
    : RatePotential(dim), p_(p), q_(p / (p - 1.0)), beta_(std::move(beta)) {
  if (!(p > 1.0)) throw std::invalid_argument("power rate: p must exceed 1");
  if (!beta_.value || !beta_.grad) {
    throw std::invalid_argument("power rate: beta needs value and gradient");
  }
  if (!(beta_.lower > 0.0) || beta_.upper < beta_.lower) {
    throw std::invalid_argument("power rate: beta must be positive and bounded");
  }
}

std::string PowerRate::name() const {
  return "power(p=" + fmt(p_) + ", beta=" + beta_.label + ")";
}

double PowerRate::value(const Vec& y, const Vec& v) const {
  return beta_.value(y) * std::pow(v.norm(), p_) / p_;
}

double PowerRate::conjugate(const Vec& y, const Vec& w) const {
  return std::pow(beta_.value(y), 1.0 - q_) * std::pow(w.norm(), q_) / q_;
}

Vec PowerRate::grad_v(const Vec& y, const Vec& v) const {
  const double r = v.norm();
  if (r == 0.0) return Vec::Zero(v.size());
  return beta_.value(y) * std::pow(r, p_ - 2.0) * v;
}

Vec PowerRate::grad_y(const Vec& y, const Vec& v) const {
  return beta_.grad(y) * (std::pow(v.norm(), p_) / p_);
}

Vec PowerRate::conjugate_grad_w(const Vec& y, const Vec& w) const {
  const double r = w.norm();
  if (r == 0.0) return Vec::Zero(w.size());
  return std::pow(beta_.value(y), 1.0 - q_) * std::pow(r, q_ - 2.0) * w;
}

Vec PowerRate::conjugate_grad_y(const Vec& y, const Vec& w) const {
  const double b = beta_.value(y);
  return beta_.grad(y) *
         ((1.0 - q_) * std::pow(b, -q_) * std::pow(w.norm(), q_) / q_);
}

Mat PowerRate::hessian_vv(const Vec& y, const Vec& v) const {
  const int d = static_cast<int>(v.size());
  const Mat eye = Mat::Identity(d, d);
  const double b = beta_.value(y);
  const double r = v.norm();
  if (r == 0.0) {
    if (p_ > 2.0) return Mat::Zero(d, d);
    if (p_ == 2.0) return b * eye;
    throw DomainError(name() + ": Hessian unbounded at v = 0");
  }
  const Vec n = v / r;
  return b * std::pow(r, p_ - 2.0) * (eye + (p_ - 2.0) * n * n.transpose());
}

double PowerRate::growth_constant() const {
  return 0.5 * std::min(beta_.lower / p_, std::pow(beta_.upper, 1.0 - q_) / q_);
}

RatePotentialPtr make_power_rate(double p, double beta, int dim) {
  return std::make_shared<PowerRate>(p, Modulation::constant_value(beta, dim),
                                     dim);
}

double rate_fenchel_gap(const RatePotential& rate, const Vec& y, const Vec& v,
                        const Vec& w) {
  return rate.value(y, v) + rate.conjugate(y, w) - w.dot(v);
}

}  // namespace varpen
