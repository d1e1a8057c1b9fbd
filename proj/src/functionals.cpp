#include "varpen/functionals.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

namespace varpen {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Discrete replacement of dphi on [a, b]: the averaged gradient for smooth
// potentials, the secant slope (or the minimal section when a == b) for 1-D
// nonsmooth ones. In both cases <g, b - a> = phi(b) - phi(a).
struct DiscreteGradient {
  Vec g;
  Mat da;
  Mat db;
};

DiscreteGradient discrete_gradient(const Potential& pot, const Vec& a,
                                   const Vec& b, const Vec& u, bool jacobian) {
  if (pot.smooth()) {
    if (jacobian) {
      auto ag = averaged_gradient_jacobian(pot, a, b);
      return {std::move(ag.g), std::move(ag.d_a), std::move(ag.d_b)};
    }
    return {averaged_gradient(pot, a, b), Mat(), Mat()};
  }
  if (jacobian) {
    throw DomainError(pot.name() + ": gradient needs a smooth potential");
  }
  if (pot.dim() != 1) {
    throw DomainError(pot.name() + ": nonsmooth potentials are supported in 1-D only");
  }
  const double ya = a(0);
  const double yb = b(0);
  if (ya != yb) {
    return {Vec::Constant(1, (pot.value(b) - pot.value(a)) / (yb - ya)), Mat(), Mat()};
  }
  // u - g = (u - dphi(y))°
  return {Vec::Constant(1, u(0) - minimal_section(pot, ya, u(0))), Mat(), Mat()};
}

Vec zeros(int d) { return Vec::Zero(d); }

}  // namespace

// ---------------------------------------------------------------- F

double TargetFunctional::param_term(const Vec& params) const {
  if (param_weight == 0.0) return 0.0;
  const Vec ref = param_ref.size() == params.size() ? param_ref : zeros(params.size());
  return 0.5 * param_weight * (params - ref).squaredNorm();
}

Vec TargetFunctional::param_grad(const Vec& params) const {
  if (param_weight == 0.0) return zeros(params.size());
  const Vec ref = param_ref.size() == params.size() ? param_ref : zeros(params.size());
  return param_weight * (params - ref);
}

// ---------------------------------------------------------------- spec

std::string to_string(PenaltyKind kind) {
  switch (kind) {
    case PenaltyKind::BEN: return "BEN";
    case PenaltyKind::BEN_AUG: return "BEN_AUG";
    case PenaltyKind::BEN_DN: return "BEN_DN";
    case PenaltyKind::DG: return "DG";
    case PenaltyKind::DG_RATE: return "DG_RATE";
    case PenaltyKind::DG_GENERIC: return "DG_GENERIC";
  }
  return "?";
}

PenaltyKind parse_penalty_kind(const std::string& text) {
  std::string t;
  for (char c : text) t += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  std::replace(t.begin(), t.end(), '-', '_');
  for (auto k : {PenaltyKind::BEN, PenaltyKind::BEN_AUG, PenaltyKind::BEN_DN,
                 PenaltyKind::DG, PenaltyKind::DG_RATE, PenaltyKind::DG_GENERIC}) {
    if (to_string(k) == t) return k;
  }
  throw std::invalid_argument("unknown penalty kind '" + text + "'");
}

void PenaltySpec::validate() const {
  if (y0.size() < 1) throw std::invalid_argument("penalty: initial state missing");
  if (kind == PenaltyKind::DG_GENERIC) {
    if (!system) throw std::invalid_argument("DG_GENERIC needs a GENERIC system");
    if (system->dim() != y0.size()) {
      throw std::invalid_argument("DG_GENERIC: y0 dimension mismatch");
    }
    system->check_state(y0);
    return;
  }
  if (!potential) throw std::invalid_argument(to_string(kind) + " needs a potential");
  if (potential->dim() != y0.size()) {
    throw std::invalid_argument("penalty: potential and y0 dimensions differ");
  }
  if (!std::isfinite(potential->value(y0))) {
    throw std::invalid_argument("penalty: y0 outside the domain of phi");
  }
  if (kind == PenaltyKind::BEN_DN || kind == PenaltyKind::DG_RATE) {
    if (!rate) throw std::invalid_argument(to_string(kind) + " needs a rate potential");
    if (rate->dim() != y0.size()) {
      throw std::invalid_argument("penalty: rate and y0 dimensions differ");
    }
    if (kind == PenaltyKind::BEN_DN && !rate->state_independent()) {
      throw std::invalid_argument("BEN_DN needs a state-independent rate");
    }
  }
}

// ---------------------------------------------------------------- GValue

std::string GValue::csv_header() {
  return "total,integral_main,integral_cross,boundary,feasible";
}

std::string GValue::csv_row() const {
  std::ostringstream os;
  os << format_double(total) << ',' << format_double(integral_main + positive_part)
     << ',' << format_double(integral_cross) << ',' << format_double(boundary)
     << ',' << (feasible ? 1 : 0);
  return os.str();
}

// ---------------------------------------------------------------- local model

LocalModel::LocalModel(const TargetFunctional& F, const PenaltySpec& spec,
                       TimeGrid grid)
    : F_(F), spec_(spec), grid_(grid), d_(spec.dim()) {
  spec_.validate();
  weights_.resize(grid_.intervals());
  for (int k = 0; k < grid_.intervals(); ++k) {
    const double t = grid_.midpoint(k);
    Weights& w = weights_[k];
    w.wy = F_.weight_y ? F_.weight_y(t) : 0.0;
    w.wdy = F_.weight_dy ? F_.weight_dy(t) : 0.0;
    w.wu = F_.weight_u ? F_.weight_u(t) : 0.0;
    if (w.wy < 0.0 || w.wdy < 0.0 || w.wu < 0.0) {
      throw std::invalid_argument("target: weights must be nonnegative");
    }
    w.yref = F_.y_ref ? F_.y_ref(t) : zeros(d_);
    w.dyref = F_.dy_ref ? F_.dy_ref(t) : zeros(d_);
    w.uref = F_.u_ref ? F_.u_ref(t) : zeros(d_);
    if (w.yref.size() != d_ || w.dyref.size() != d_ || w.uref.size() != d_) {
      throw std::invalid_argument("target: reference dimension mismatch");
    }
  }
}

bool LocalModel::has_aug() const {
  return spec_.kind == PenaltyKind::BEN_AUG || spec_.kind == PenaltyKind::BEN_DN;
}

double LocalModel::generic_tolerance(const Vec& a, const Vec& b) const {
  const double dt = grid_.dt();
  const double scale = 1.0 + std::max(a.lpNorm<Eigen::Infinity>(), b.lpNorm<Eigen::Infinity>()) +
                       ((b - a) / dt).lpNorm<Eigen::Infinity>();
  return 1e-8 * scale + dt * dt * scale;
}

LocalTerms LocalModel::terms(int k, const Vec& a, const Vec& b, const Vec& u,
                             const Vec& w) const {
  const double dt = grid_.dt();
  const Vec m = 0.5 * (a + b);
  const Vec v = (b - a) / dt;
  const Weights& wt = weights_[k];
  LocalTerms t;

  double f = 0.0;
  if (wt.wy != 0.0) f += 0.5 * wt.wy * (m - wt.yref).squaredNorm();
  if (wt.wdy != 0.0) f += 0.5 * wt.wdy * (v - wt.dyref).squaredNorm();
  if (wt.wu != 0.0) f += 0.5 * wt.wu * (u - wt.uref).squaredNorm();
  if (F_.extra) {
    IntervalSample s{k, grid_.midpoint(k), m, v, u};
    f += F_.extra->value(s);
  }
  t.f = dt * f;

  auto mark = [&](const char* term) {
    if (t.infinite_term.empty()) t.infinite_term = term;
  };

  switch (spec_.kind) {
    case PenaltyKind::BEN:
    case PenaltyKind::BEN_AUG: {
      const Potential& phi = *spec_.potential;
      const double pm = phi.value(m);
      const double pc = phi.conjugate(u - v);
      if (!std::isfinite(pm)) mark("phi(y_mid)");
      if (!std::isfinite(pc)) mark("phi*(u - y')");
      t.main = dt * (pm + pc);
      t.cross = -dt * u.dot(m);
      t.boundary = 0.5 * b.squaredNorm() - 0.5 * a.squaredNorm();
      if (spec_.kind == PenaltyKind::BEN_AUG) {
        const double dphi = phi.value(b) - phi.value(a);
        if (!std::isfinite(dphi)) mark("phi(y_k)");
        t.aug = dt * (v.squaredNorm() - u.dot(v)) + dphi;
      }
      break;
    }
    case PenaltyKind::BEN_DN: {
      const Potential& phi = *spec_.potential;
      const RatePotential& psi = *spec_.rate;
      const double pm = phi.value(m);
      const double pc = phi.conjugate(u - w);
      if (!std::isfinite(pm)) mark("phi(y_mid)");
      if (!std::isfinite(pc)) mark("phi*(u - w)");
      t.main = dt * (pm + pc - (u - w).dot(m));
      const double dphi = phi.value(b) - phi.value(a);
      if (!std::isfinite(dphi)) mark("phi(y_k)");
      t.aug = dt * (psi.value(m, v) + psi.conjugate(m, w) - u.dot(v)) + dphi;
      break;
    }
    case PenaltyKind::DG:
    case PenaltyKind::DG_RATE: {
      const Potential& phi = *spec_.potential;
      const double dphi = phi.value(b) - phi.value(a);
      if (!std::isfinite(dphi)) {
        mark("phi(y_k)");
        t.main = kInf;
        break;
      }
      DiscreteGradient dg;
      try {
        dg = discrete_gradient(phi, a, b, u, false);
      } catch (const DomainError&) {
        mark("dphi(y_mid)");
        t.main = kInf;
        break;
      }
      if (spec_.kind == PenaltyKind::DG) {
        t.main = dt * (0.5 * v.squaredNorm() + 0.5 * (dg.g - u).squaredNorm());
      } else {
        const RatePotential& psi = *spec_.rate;
        t.main = dt * (psi.value(m, v) + psi.conjugate(m, u - dg.g));
      }
      t.cross = -dt * u.dot(v);
      t.boundary = dphi;
      break;
    }
    case PenaltyKind::DG_GENERIC: {
      const GenericSystem& sys = *spec_.system;
      if (!(sys.domain_margin(a) > 0.0) || !(sys.domain_margin(b) > 0.0)) {
        throw DomainError(sys.name() + ": state outside the domain on interval " +
                          std::to_string(k));
      }
      const Vec ys = sys.collocation_state(a, b);
      const Vec eta = v - sys.poisson(ys) * sys.energy_grad(ys);
      double residual = 0.0;
      Vec eta_r;
      const double ps = sys.dissipation(ys, eta, generic_tolerance(a, b), &residual, &eta_r);
      if (!std::isfinite(ps)) {
        mark("psi(y, y' - L DE)");
        t.violation = residual;
      }
      const Potential& phi = sys.potential();
      const double pc = sys.dissipation_conjugate(ys, u - phi.grad(ys));
      t.main = dt * (ps + pc);
      // The tolerated off-range part of eta is charged to dphi, so that the
      // local sum is the Fenchel-Young gap at the projected rate (>= 0).
      t.cross = std::isfinite(ps) ? -dt * (u.dot(eta_r) + phi.grad(ys).dot(eta - eta_r))
                                  : -dt * u.dot(eta);
      t.boundary = phi.value(b) - phi.value(a);
      break;
    }
  }
  if (!t.infinite_term.empty()) t.main = kInf;
  return t;
}

LocalGradient LocalModel::gradient(int k, const Vec& a, const Vec& b,
                                   const Vec& u, const Vec& w) const {
  const int d = d_;
  const double dt = grid_.dt();
  const Vec m = 0.5 * (a + b);
  const Vec v = (b - a) / dt;
  const Weights& wt = weights_[k];
  const int n = local_size();
  LocalGradient lg{Vec::Zero(n), Vec::Zero(n), Vec::Zero(n)};

  // blocks of z
  auto A = [&](Vec& z) { return z.segment(0, d); };
  auto B = [&](Vec& z) { return z.segment(d, d); };
  auto U = [&](Vec& z) { return z.segment(2 * d, d); };
  auto W = [&](Vec& z) { return z.segment(3 * d, d); };

  // F: dt * (...); derivatives w.r.t. m, v, u
  {
    Vec fm = wt.wy * (m - wt.yref);
    Vec fv = wt.wdy * (v - wt.dyref);
    Vec fu = wt.wu * (u - wt.uref);
    if (F_.extra) {
      if (!F_.extra->grad_y || !F_.extra->grad_u) {
        throw std::invalid_argument("target: extra integrand lacks gradients");
      }
      IntervalSample s{k, grid_.midpoint(k), m, v, u};
      fm += F_.extra->grad_y(s);
      fu += F_.extra->grad_u(s);
    }
    A(lg.f) = 0.5 * dt * fm - fv;
    B(lg.f) = 0.5 * dt * fm + fv;
    U(lg.f) = dt * fu;
  }

  switch (spec_.kind) {
    case PenaltyKind::BEN:
    case PenaltyKind::BEN_AUG: {
      const Potential& phi = *spec_.potential;
      const Vec gm = dt * (phi.grad(m) - u);
      const Vec cg = phi.conjugate_grad(u - v);
      if (!cg.allFinite()) throw EvaluationError("phi*(u - y') is infinite");
      A(lg.g) = 0.5 * gm + cg - a;
      B(lg.g) = 0.5 * gm - cg + b;
      U(lg.g) = dt * (cg - m);
      if (spec_.kind == PenaltyKind::BEN_AUG) {
        const Vec r = 2.0 * v - u;
        A(lg.aug) = -r - phi.grad(a);
        B(lg.aug) = r + phi.grad(b);
        U(lg.aug) = -dt * v;
      }
      break;
    }
    case PenaltyKind::BEN_DN: {
      const Potential& phi = *spec_.potential;
      const RatePotential& psi = *spec_.rate;
      const Vec cg = phi.conjugate_grad(u - w);
      if (!cg.allFinite()) throw EvaluationError("phi*(u - w) is infinite");
      const Vec gm = dt * (phi.grad(m) - (u - w));
      A(lg.g) = 0.5 * gm;
      B(lg.g) = 0.5 * gm;
      U(lg.g) = dt * (cg - m);
      W(lg.g) = -dt * (cg - m);
      const Vec r = psi.grad_v(m, v) - u;
      A(lg.aug) = -r - phi.grad(a);
      B(lg.aug) = r + phi.grad(b);
      U(lg.aug) = -dt * v;
      W(lg.aug) = dt * psi.conjugate_grad_w(m, w);
      break;
    }
    case PenaltyKind::DG: {
      const Potential& phi = *spec_.potential;
      const DiscreteGradient dg = discrete_gradient(phi, a, b, u, true);
      const Vec res = dg.g - u;
      A(lg.g) = -v + dt * dg.da.transpose() * res + u - phi.grad(a);
      B(lg.g) = v + dt * dg.db.transpose() * res - u + phi.grad(b);
      U(lg.g) = -dt * (res + v);
      break;
    }
    case PenaltyKind::DG_RATE: {
      const Potential& phi = *spec_.potential;
      const RatePotential& psi = *spec_.rate;
      const DiscreteGradient dg = discrete_gradient(phi, a, b, u, true);
      const Vec xi = u - dg.g;
      const Vec zeta = psi.conjugate_grad_w(m, xi);
      const Vec dm = dt * (psi.grad_y(m, v) + psi.conjugate_grad_y(m, xi));
      const Vec dv = psi.grad_v(m, v) - u;  // already divided by dt * (1/dt)
      A(lg.g) = 0.5 * dm - dv - dt * dg.da.transpose() * zeta - phi.grad(a);
      B(lg.g) = 0.5 * dm + dv - dt * dg.db.transpose() * zeta + phi.grad(b);
      U(lg.g) = dt * (zeta - v);
      break;
    }
    case PenaltyKind::DG_GENERIC:
      throw DomainError("grad_E: penalized control of GENERIC systems is not supported");
  }
  return lg;
}

// ---------------------------------------------------------------- evaluators

namespace {

bool initial_condition_ok(const PenaltySpec& spec, const Trajectory& y) {
  const double tol = 1e-12 * (1.0 + spec.y0.lpNorm<Eigen::Infinity>());
  return (y.initial() - spec.y0).lpNorm<Eigen::Infinity>() <= tol;
}

void check_shapes(const PenaltySpec& spec, const Control& u, const Trajectory& y,
                  const Control* w) {
  if (!(u.grid() == y.grid())) throw std::invalid_argument("G: grid mismatch");
  if (u.dim() != spec.dim() || y.dim() != spec.dim()) {
    throw std::invalid_argument("G: dimension mismatch");
  }
  if (w && (!(w->grid() == y.grid()) || w->dim() != spec.dim())) {
    throw std::invalid_argument("G: auxiliary control shape mismatch");
  }
}

GValue evaluate(PenaltySpec spec, PenaltyKind kind, const Control& u,
                const Trajectory& y, const Control* w) {
  spec.kind = kind;
  check_shapes(spec, u, y, w);
  if (kind == PenaltyKind::BEN_DN && !w) {
    throw std::invalid_argument("BEN_DN needs the auxiliary w");
  }
  GValue out;
  if (!initial_condition_ok(spec, y)) {
    out.total = kInf;
    out.feasible = false;
    out.infinite_term = "y(0) != y0";
    return out;
  }
  static const TargetFunctional kNoTarget;
  LocalModel model(kNoTarget, spec, y.grid());
  const Vec zero = Vec::Zero(spec.dim());
  double aug = 0.0;
  for (int k = 0; k < y.grid().intervals(); ++k) {
    const LocalTerms t =
        model.terms(k, y.node(k), y.node(k + 1), u.value(k), w ? w->value(k) : zero);
    if (!t.infinite_term.empty()) {
      out.total = kInf;
      out.infinite_term = t.infinite_term;
      out.infinite_interval = k;
      out.violation = t.violation;
      return out;
    }
    out.integral_main += t.main;
    out.integral_cross += t.cross;
    out.boundary += t.boundary;
    aug += t.aug;
  }
  if (model.has_aug()) out.positive_part = std::max(aug, 0.0);
  out.total = out.integral_main + out.integral_cross + out.boundary + out.positive_part;
  return out;
}

}  // namespace

double eval_F(const TargetFunctional& F, const Control& u, const Trajectory& y,
              const Vec* params) {
  if (!(u.grid() == y.grid())) throw std::invalid_argument("F: grid mismatch");
  if (u.dim() != y.dim()) throw std::invalid_argument("F: dimension mismatch");
  PenaltySpec dummy;
  dummy.kind = PenaltyKind::BEN;
  dummy.y0 = y.initial();
  dummy.potential = make_quadratic(1.0, y.dim());
  LocalModel model(F, dummy, y.grid());
  double sum = 0.0;
  const Vec zero = Vec::Zero(y.dim());
  for (int k = 0; k < y.grid().intervals(); ++k) {
    sum += model.terms(k, y.node(k), y.node(k + 1), u.value(k), zero).f;
  }
  if (params) sum += F.param_term(*params);
  if (!std::isfinite(sum)) throw EvaluationError("F: non-finite value");
  return sum;
}

GValue eval_G_BEN(const PenaltySpec& spec, const Control& u, const Trajectory& y) {
  return evaluate(spec, PenaltyKind::BEN, u, y, nullptr);
}

GValue eval_G_BEN_aug(const PenaltySpec& spec, const Control& u,
                      const Trajectory& y) {
  return evaluate(spec, PenaltyKind::BEN_AUG, u, y, nullptr);
}

GValue eval_G_BEN_dn(const PenaltySpec& spec, const Control& u,
                     const Trajectory& y, const Control& w) {
  return evaluate(spec, PenaltyKind::BEN_DN, u, y, &w);
}

GValue eval_G_DG(const PenaltySpec& spec, const Control& u, const Trajectory& y) {
  return evaluate(spec, PenaltyKind::DG, u, y, nullptr);
}

GValue eval_G_DG_rate(const PenaltySpec& spec, const Control& u,
                      const Trajectory& y) {
  return evaluate(spec, PenaltyKind::DG_RATE, u, y, nullptr);
}

GValue eval_G_DG_generic(const PenaltySpec& spec, const Control& u,
                         const Trajectory& y) {
  return evaluate(spec, PenaltyKind::DG_GENERIC, u, y, nullptr);
}

GValue eval_G(const PenaltySpec& spec, const Control& u, const Trajectory& y,
              const Control* w) {
  return evaluate(spec, spec.kind, u, y, w);
}

EGradient grad_E(const TargetFunctional& F, const PenaltySpec& spec, double eps,
                 const Control& u, const Trajectory& y, const Control* w,
                 const Vec* params) {
  if (!(eps > 0.0)) throw std::invalid_argument("grad_E: eps must be positive");
  check_shapes(spec, u, y, w);
  if (spec.needs_auxiliary() && !w) {
    throw std::invalid_argument("grad_E: BEN_DN needs the auxiliary w");
  }
  if (!initial_condition_ok(spec, y)) {
    throw EvaluationError("grad_E: E is +inf (initial condition violated)");
  }
  LocalModel model(F, spec, y.grid());
  const int n = y.grid().intervals();
  const int d = spec.dim();
  const Vec zero = Vec::Zero(d);

  double f = 0.0, g = 0.0, r = 0.0;
  for (int k = 0; k < n; ++k) {
    const LocalTerms t =
        model.terms(k, y.node(k), y.node(k + 1), u.value(k), w ? w->value(k) : zero);
    if (!t.infinite_term.empty()) {
      throw EvaluationError("grad_E: E is +inf (" + t.infinite_term + " on interval " +
                            std::to_string(k) + ")");
    }
    f += t.f;
    g += t.g();
    r += t.aug;
  }
  const bool active = model.has_aug() && r > 0.0;

  EGradient out;
  out.value = f + (g + (model.has_aug() ? std::max(r, 0.0) : 0.0)) / eps;
  out.dy = Mat::Zero(n, d);
  out.du = Mat::Zero(n, d);
  if (spec.needs_auxiliary()) out.dw = Mat::Zero(n, d);
  for (int k = 0; k < n; ++k) {
    const LocalGradient lg =
        model.gradient(k, y.node(k), y.node(k + 1), u.value(k), w ? w->value(k) : zero);
    Vec z = lg.f + lg.g / eps;
    if (active) z += lg.aug / eps;
    if (k > 0) out.dy.row(k - 1) += z.segment(0, d).transpose();
    out.dy.row(k) += z.segment(d, d).transpose();
    out.du.row(k) += z.segment(2 * d, d).transpose();
    if (spec.needs_auxiliary()) out.dw.row(k) += z.segment(3 * d, d).transpose();
  }
  if (params) {
    out.value += F.param_term(*params);
    out.dparams = F.param_grad(*params);
  }
  return out;
}

}  // namespace varpen
