#include "varpen/generic.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace varpen {

double GenericSystem::dissipation_conjugate(const Vec& y, const Vec& xi) const {
  return 0.5 * xi.dot(onsager(y) * xi);
}

Vec GenericSystem::collocation_state(const Vec& a, const Vec& b) const {
  return 0.5 * (a + b);
}

Vec GenericSystem::vector_field(const Vec& y, const Vec& u) const {
  check_state(y);
  return poisson(y) * energy_grad(y) - onsager(y) * (potential().grad(y) - u);
}

void GenericSystem::check_state(const Vec& y) const {
  if (y.size() != dim()) {
    throw std::invalid_argument(name() + ": state has wrong dimension");
  }
  if (!(domain_margin(y) > 0.0)) {
    throw DomainError(name() + ": state outside the domain");
  }
}

Oscillator::Oscillator(OscillatorParams params)
    : params_(params), entropy_(params.kappa) {
  if (!(params.nu >= 0.0)) throw std::invalid_argument("oscillator: nu must be >= 0");
  if (!(params.lambda >= 0.0)) {
    throw std::invalid_argument("oscillator: lambda must be >= 0");
  }
}

std::string Oscillator::name() const {
  std::ostringstream os;
  os << "oscillator(nu=" << params_.nu << ", lambda=" << params_.lambda
     << ", kappa=" << params_.kappa << ")";
  return os.str();
}

double Oscillator::energy(const Vec& y) const {
  return 0.5 * y(1) * y(1) + 0.5 * params_.lambda * y(0) * y(0) +
         params_.kappa * y(2);
}

Vec Oscillator::energy_grad(const Vec& y) const {
  Vec g(3);
  g << params_.lambda * y(0), y(1), params_.kappa;
  return g;
}

Mat Oscillator::onsager(const Vec& y) const {
  const double r = -y(1) / params_.kappa;
  Vec b(3);
  b << 0.0, 1.0, r;
  return (params_.nu * y(2)) * (b * b.transpose());
}

Mat Oscillator::poisson(const Vec& y) const {
  const double s = y(2) / params_.kappa;
  Mat l = Mat::Zero(3, 3);
  l(0, 1) = 1.0;
  l(1, 0) = -1.0;
  l(1, 2) = -s;
  l(2, 1) = s;
  return l;
}

double Oscillator::dissipation(const Vec& y, const Vec& eta, double tol,
                               double* residual, Vec* projection) const {
  // K = nu theta b b^T, so psi is finite only on span{b}.
  Vec b(3);
  b << 0.0, 1.0, -y(1) / params_.kappa;
  const double s = params_.nu > 0.0 ? b.dot(eta) / b.squaredNorm() : 0.0;
  const double off = (eta - s * b).lpNorm<Eigen::Infinity>();
  if (residual) *residual = off;
  if (projection) *projection = s * b;
  if (off > tol) return std::numeric_limits<double>::infinity();
  if (params_.nu == 0.0) return 0.0;
  return s * s / (2.0 * params_.nu * y(2));
}

double Oscillator::dissipation_conjugate(const Vec& y, const Vec& xi) const {
  const double t = xi(1) - y(1) * xi(2) / params_.kappa;
  return 0.5 * params_.nu * y(2) * t * t;
}

Vec Oscillator::collocation_state(const Vec& a, const Vec& b) const {
  Vec y = 0.5 * (a + b);
  const double ta = a(2);
  const double tb = b(2);
  if (!(ta > 0.0) || !(tb > 0.0)) {
    throw DomainError(name() + ": theta must be positive");
  }
  const double d = std::log(tb) - std::log(ta);
  if (d != 0.0) y(2) = (tb - ta) / d;
  return y;
}

std::shared_ptr<const Oscillator> build_oscillator(const OscillatorParams& params) {
  if (!(params.kappa > 0.0)) {
    throw std::invalid_argument("oscillator: kappa must be positive");
  }
  return std::make_shared<Oscillator>(params);
}

Trajectory integrate_generic(const GenericSystem& system, const Vec& y0,
                             const Control& u, double theta_min, int substeps) {
  if (substeps < 1) throw std::invalid_argument("integrate_generic: substeps >= 1");
  if (u.dim() != system.dim() || y0.size() != system.dim()) {
    throw std::invalid_argument("integrate_generic: dimension mismatch");
  }
  const TimeGrid& g = u.grid();
  auto guard = [&](const Vec& y, double t) {
    if (!(system.domain_margin(y) > theta_min) || !y.allFinite()) {
      std::ostringstream os;
      os << system.name() << ": temperature collapsed at t = " << t;
      throw DomainError(os.str());
    }
  };
  guard(y0, 0.0);
  Mat nodes(g.intervals() + 1, system.dim());
  nodes.row(0) = y0.transpose();
  Vec y = y0;
  const double h = g.dt() / substeps;
  for (int k = 0; k < g.intervals(); ++k) {
    const Vec uk = u.value(k);
    for (int s = 0; s < substeps; ++s) {
      const double t = g.time(k) + s * h;
      const Vec k1 = system.vector_field(y, uk);
      const Vec y2 = y + 0.5 * h * k1;
      guard(y2, t + 0.5 * h);
      const Vec k2 = system.vector_field(y2, uk);
      const Vec y3 = y + 0.5 * h * k2;
      guard(y3, t + 0.5 * h);
      const Vec k3 = system.vector_field(y3, uk);
      const Vec y4 = y + h * k3;
      guard(y4, t + h);
      const Vec k4 = system.vector_field(y4, uk);
      y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      guard(y, t + h);
    }
    nodes.row(k + 1) = y.transpose();
  }
  return Trajectory(g, std::move(nodes));
}

ConservationReport conservation_report(const GenericSystem& system,
                                       const Trajectory& y) {
  ConservationReport r;
  const TimeGrid& g = y.grid();
  const double e0 = system.energy(y.node(0));
  const Potential& phi = system.potential();
  double prev = phi.value(y.node(0));
  r.min_entropy_rate = std::numeric_limits<double>::infinity();
  for (int k = 1; k <= g.intervals(); ++k) {
    const Vec yk = y.node(k);
    r.max_energy_drift = std::max(r.max_energy_drift, std::abs(system.energy(yk) - e0));
    const double cur = phi.value(yk);
    r.min_entropy_rate = std::min(r.min_entropy_rate, (prev - cur) / g.dt());
    prev = cur;
  }
  return r;
}

}  // namespace varpen
