#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "varpen/core.hpp"

namespace varpen {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

// A potential phi : R^d -> (-inf, +inf] exposing the pieces of convex
// analysis the functionals need. `grad` returns the minimal-norm element of
// the subdifferential; values outside the effective domain are +inf.
class Potential {
 public:
  explicit Potential(int dim);
  virtual ~Potential() = default;

  int dim() const { return dim_; }
  virtual std::string name() const = 0;

  virtual double value(const Vec& y) const = 0;
  virtual Vec grad(const Vec& y) const = 0;

  // Second derivative. The default throws DomainError.
  virtual Mat hessian(const Vec& y) const;

  // False for potentials whose subdifferential is genuinely multivalued
  // somewhere (no Hessian, minimal-section treatment in the DG functional).
  virtual bool smooth() const { return true; }

  // phi*(xi) = sup_y <xi, y> - phi(y). The default maximizes numerically by
  // proximal-point iterations to tolerance 1e-10 and returns +inf when the
  // supremum is unbounded.
  virtual double conjugate(const Vec& xi) const;
  // A maximizer y in the definition of phi*(xi), i.e. xi in dphi(y).
  virtual Vec conjugate_grad(const Vec& xi) const;

  // argmin_x step*phi(x) + |x - z|^2 / 2. The default runs damped Newton on
  // the optimality condition and throws SolverError after 100 iterations.
  virtual Vec prox(double step, const Vec& z) const;

  // [d^- phi(y), d^+ phi(y)] for d = 1; empty outside D(dphi).
  virtual std::optional<Interval> subdifferential_interval(double y) const;

 protected:
  void check_dim(const Vec& v, const char* what) const;

 private:
  int dim_;
};

using PotentialPtr = std::shared_ptr<const Potential>;

// lambda |y|^2 / 2
class QuadraticPotential final : public Potential {
 public:
  explicit QuadraticPotential(double lambda, int dim = 1);
  double lambda() const { return lambda_; }
  std::string name() const override;
  double value(const Vec& y) const override;
  Vec grad(const Vec& y) const override;
  Mat hessian(const Vec& y) const override;
  double conjugate(const Vec& xi) const override;
  Vec conjugate_grad(const Vec& xi) const override;
  Vec prox(double step, const Vec& z) const override;

 private:
  double lambda_;
};

// c |y|^p / p, p > 1. Quartic is PowerPotential(4, 1).
class PowerPotential final : public Potential {
 public:
  PowerPotential(double p, double c, int dim = 1, std::string label = "");
  double exponent() const { return p_; }
  double coefficient() const { return c_; }
  std::string name() const override;
  double value(const Vec& y) const override;
  Vec grad(const Vec& y) const override;
  Mat hessian(const Vec& y) const override;
  double conjugate(const Vec& xi) const override;
  Vec conjugate_grad(const Vec& xi) const override;
  Vec prox(double step, const Vec& z) const override;

 private:
  double p_;
  double c_;
  double q_;  // dual exponent p / (p - 1)
  std::string label_;
};

PotentialPtr make_quadratic(double lambda, int dim = 1);
PotentialPtr make_quartic(int dim = 1);

// c |y| on the real line.
class AbsPotential final : public Potential {
 public:
  explicit AbsPotential(double c = 1.0);
  std::string name() const override;
  double value(const Vec& y) const override;
  Vec grad(const Vec& y) const override;
  Mat hessian(const Vec& y) const override;
  bool smooth() const override { return false; }
  double conjugate(const Vec& xi) const override;
  Vec conjugate_grad(const Vec& xi) const override;
  Vec prox(double step, const Vec& z) const override;
  std::optional<Interval> subdifferential_interval(double y) const override;

 private:
  double c_;
};

// C^{1,1} perturbation phi_2 with user-supplied derivatives.
struct SmoothTerm {
  std::function<double(const Vec&)> value;
  std::function<Vec(const Vec&)> grad;
  std::function<Mat(const Vec&)> hessian;  // optional
  double lipschitz = 0.0;
};

// phi = phi_1 + phi_2 with dphi = dphi_1 + Dphi_2.
class SumPotential final : public Potential {
 public:
  SumPotential(PotentialPtr base, SmoothTerm perturbation);
  std::string name() const override;
  double value(const Vec& y) const override;
  Vec grad(const Vec& y) const override;
  Mat hessian(const Vec& y) const override;
  bool smooth() const override { return base_->smooth(); }
  Vec prox(double step, const Vec& z) const override;
  std::optional<Interval> subdifferential_interval(double y) const override;

 private:
  PotentialPtr base_;
  SmoothTerm perturbation_;
};

// phi(q, p, theta) = q - kappa ln(theta) - kappa, the negative entropy of the
// thermalized oscillator; effective domain theta > 0.
class OscillatorEntropyPotential final : public Potential {
 public:
  explicit OscillatorEntropyPotential(double kappa);
  double kappa() const { return kappa_; }
  std::string name() const override;
  double value(const Vec& y) const override;
  Vec grad(const Vec& y) const override;
  Mat hessian(const Vec& y) const override;
  double conjugate(const Vec& xi) const override;
  Vec conjugate_grad(const Vec& xi) const override;
  Vec prox(double step, const Vec& z) const override;

 private:
  double kappa_;
};

// phi(y) + phi*(xi) - <xi, y>. Throws DomainError when either value is
// infinite.
double fenchel_gap(const Potential& pot, const Vec& y, const Vec& xi);

// Projection of 0 onto u - [d^- phi(y), d^+ phi(y)] (d = 1).
double minimal_section(const Potential& pot, double y, double u);

// |phi(y_N) - phi(y_0) - sum_k dt <grad phi(y_mid), slope_k>|
double chain_rule_defect(const Potential& pot, const Trajectory& y);

// Averaged gradient int_0^1 grad phi(a + s (b - a)) ds by 3-point
// Gauss-Legendre. For potentials with polynomial gradient of degree <= 5,
// <g, b - a> = phi(b) - phi(a) exactly.
struct AveragedGradient {
  Vec g;
  Mat d_a;  // dg / da
  Mat d_b;  // dg / db
};
Vec averaged_gradient(const Potential& pot, const Vec& a, const Vec& b);
AveragedGradient averaged_gradient_jacobian(const Potential& pot, const Vec& a,
                                            const Vec& b);

// Positive, bounded state modulation beta(y) for rate potentials.
struct Modulation {
  std::string label;
  std::function<double(const Vec&)> value;
  std::function<Vec(const Vec&)> grad;
  double lower = 1.0;
  double upper = 1.0;
  bool constant = true;

  static Modulation constant_value(double beta, int dim);
  // beta0 + beta1 sin(y_1), requires beta0 > |beta1|.
  static Modulation sinusoidal(double beta0, double beta1, int dim);
};

// Dissipation potential psi(y, v), convex in v with psi(y, 0) = 0, and its
// conjugate psi*(y, w) in the second slot.
class RatePotential {
 public:
  explicit RatePotential(int dim);
  virtual ~RatePotential() = default;

  int dim() const { return dim_; }
  virtual std::string name() const = 0;
  virtual bool state_independent() const = 0;

  virtual double value(const Vec& y, const Vec& v) const = 0;
  virtual double conjugate(const Vec& y, const Vec& w) const = 0;
  virtual Vec grad_v(const Vec& y, const Vec& v) const = 0;
  virtual Vec grad_y(const Vec& y, const Vec& v) const = 0;
  virtual Vec conjugate_grad_w(const Vec& y, const Vec& w) const = 0;
  virtual Vec conjugate_grad_y(const Vec& y, const Vec& w) const = 0;
  virtual Mat hessian_vv(const Vec& y, const Vec& v) const = 0;

 private:
  int dim_;
};

using RatePotentialPtr = std::shared_ptr<const RatePotential>;

// psi(y, v) = beta(y) |v|^p / p, psi*(y, w) = beta(y)^{1-p'} |w|^{p'} / p'.
class PowerRate final : public RatePotential {
 public:
  PowerRate(double p, Modulation beta, int dim = 1);
  double exponent() const { return p_; }
  double dual_exponent() const { return q_; }
  const Modulation& beta() const { return beta_; }

  std::string name() const override;
  bool state_independent() const override { return beta_.constant; }
  double value(const Vec& y, const Vec& v) const override;
  double conjugate(const Vec& y, const Vec& w) const override;
  Vec grad_v(const Vec& y, const Vec& v) const override;
  Vec grad_y(const Vec& y, const Vec& v) const override;
  Vec conjugate_grad_w(const Vec& y, const Vec& w) const override;
  Vec conjugate_grad_y(const Vec& y, const Vec& w) const override;
  Mat hessian_vv(const Vec& y, const Vec& v) const override;

  // c with psi(y,v) + psi*(y,w) >= c|v|^p + c|w|^{p'} over the beta range.
  double growth_constant() const;

 private:
  double p_;
  double q_;
  Modulation beta_;
};

RatePotentialPtr make_power_rate(double p, double beta, int dim = 1);

// psi(y, v) + psi*(y, w) - <w, v>
double rate_fenchel_gap(const RatePotential& rate, const Vec& y, const Vec& v,
                        const Vec& w);

}  // namespace varpen
