#pragma once

#include <memory>
#include <string>

#include "varpen/convex.hpp"
#include "varpen/core.hpp"

namespace varpen {

// y' = L(y) DE(y) - K(y) (dphi(y) - u) with L antisymmetric, K symmetric
// positive semidefinite and L^T dphi = K DE = 0.
class GenericSystem {
 public:
  virtual ~GenericSystem() = default;

  virtual int dim() const = 0;
  virtual std::string name() const = 0;

  // Positive inside the domain; integration aborts when it drops below
  // theta_min.
  virtual double domain_margin(const Vec& y) const = 0;

  virtual double energy(const Vec& y) const = 0;
  virtual Vec energy_grad(const Vec& y) const = 0;
  virtual const Potential& potential() const = 0;
  virtual Mat onsager(const Vec& y) const = 0;  // K
  virtual Mat poisson(const Vec& y) const = 0;  // L

  // psi(y, eta), the conjugate of xi -> <K(y) xi, xi> / 2. Returns +inf when
  // eta is farther than tol from range K(y); *residual receives the distance
  // and *projection the component of eta in range K(y) that psi was taken at.
  virtual double dissipation(const Vec& y, const Vec& eta, double tol,
                             double* residual = nullptr,
                             Vec* projection = nullptr) const = 0;
  virtual double dissipation_conjugate(const Vec& y, const Vec& xi) const;

  // State at which an interval [a, b] is evaluated by the DG functional.
  virtual Vec collocation_state(const Vec& a, const Vec& b) const;

  Vec vector_field(const Vec& y, const Vec& u) const;

  // Throws DomainError unless domain_margin(y) > 0.
  void check_state(const Vec& y) const;
};

using GenericSystemPtr = std::shared_ptr<const GenericSystem>;

struct OscillatorParams {
  double nu = 1.0;      // viscosity
  double lambda = 1.0;  // elastic modulus
  double kappa = 1.0;   // heat capacity
};

// Thermalized damped oscillator, state y = (q, p, theta):
//   q'' + nu q' + lambda q + theta = 0,  kappa theta' = nu (q')^2 + theta q'.
// E = p^2/2 + lambda q^2/2 + kappa theta, phi = q - kappa ln(theta) - kappa.
class Oscillator final : public GenericSystem {
 public:
  explicit Oscillator(OscillatorParams params);

  const OscillatorParams& params() const { return params_; }

  int dim() const override { return 3; }
  std::string name() const override;
  double domain_margin(const Vec& y) const override { return y(2); }
  double energy(const Vec& y) const override;
  Vec energy_grad(const Vec& y) const override;
  const Potential& potential() const override { return entropy_; }
  Mat onsager(const Vec& y) const override;
  Mat poisson(const Vec& y) const override;
  double dissipation(const Vec& y, const Vec& eta, double tol,
                     double* residual = nullptr,
                     Vec* projection = nullptr) const override;
  double dissipation_conjugate(const Vec& y, const Vec& xi) const override;

  // (q_mid, p_mid, logarithmic mean of theta). With this choice
  // <dphi(y*), b - a> = phi(b) - phi(a) exactly.
  Vec collocation_state(const Vec& a, const Vec& b) const override;

 private:
  OscillatorParams params_;
  OscillatorEntropyPotential entropy_;
};

std::shared_ptr<const Oscillator> build_oscillator(const OscillatorParams& params);

// Classical RK4 with the control frozen on each interval. Throws DomainError
// naming the first time at which domain_margin <= theta_min.
Trajectory integrate_generic(const GenericSystem& system, const Vec& y0,
                             const Control& u, double theta_min = 1e-8,
                             int substeps = 1);

struct ConservationReport {
  double max_energy_drift = 0.0;  // max_k |E(y_k) - E(y_0)|
  double min_entropy_rate = 0.0;  // min_k (phi(y_k) - phi(y_{k+1})) / dt
};

ConservationReport conservation_report(const GenericSystem& system,
                                       const Trajectory& y);

}  // namespace varpen
