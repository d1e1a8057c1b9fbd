#include "varpen/optimize.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <ostream>
#include <random>
#include <thread>

#include "varpen/generic.hpp"

namespace varpen {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

}  // namespace

// ---------------------------------------------------------------- ControlSpace

ControlSpace ControlSpace::param_family(std::vector<VecTimeFunction> basis,
                                        Vec lower, Vec upper, std::string label) {
  if (basis.empty()) throw std::invalid_argument("control space: empty basis");
  if (lower.size() != static_cast<long>(basis.size()) ||
      upper.size() != static_cast<long>(basis.size())) {
    throw std::invalid_argument("control space: box size must match the basis");
  }
  for (long i = 0; i < lower.size(); ++i) {
    if (!(lower(i) <= upper(i))) throw std::invalid_argument("control space: empty box");
  }
  ControlSpace s;
  s.dim_ = static_cast<int>(basis.front()(0.0).size());
  s.basis_ = std::move(basis);
  s.lo_ = std::move(lower);
  s.hi_ = std::move(upper);
  s.label_ = std::move(label);
  return s;
}

ControlSpace ControlSpace::exponential_decay(double lo, double hi) {
  return param_family({[](double t) { return Vec::Constant(1, std::exp(-t)); }},
                      Vec::Constant(1, lo), Vec::Constant(1, hi), "u0*exp(-t)");
}

ControlSpace ControlSpace::constant(int dim, double lo, double hi) {
  std::vector<VecTimeFunction> basis;
  for (int j = 0; j < dim; ++j) {
    basis.push_back([dim, j](double) {
      Vec e = Vec::Zero(dim);
      e(j) = 1.0;
      return e;
    });
  }
  return param_family(std::move(basis), Vec::Constant(dim, lo), Vec::Constant(dim, hi),
                      "constant");
}

ControlSpace ControlSpace::free_nodal(int dim, double lo, double hi) {
  if (dim < 1) throw std::invalid_argument("control space: dimension must be >= 1");
  if (!(lo <= hi)) throw std::invalid_argument("control space: empty box");
  ControlSpace s;
  s.dim_ = dim;
  s.nodal_lo_ = lo;
  s.nodal_hi_ = hi;
  s.label_ = "free";
  return s;
}

int ControlSpace::unknowns(const TimeGrid& grid) const {
  return is_param() ? param_count() : grid.intervals() * dim_;
}

Vec ControlSpace::lower(const TimeGrid& grid) const {
  return is_param() ? lo_ : Vec::Constant(unknowns(grid), nodal_lo_);
}

Vec ControlSpace::upper(const TimeGrid& grid) const {
  return is_param() ? hi_ : Vec::Constant(unknowns(grid), nodal_hi_);
}

Vec ControlSpace::center(const TimeGrid& grid) const {
  return 0.5 * (lower(grid) + upper(grid));
}

Vec ControlSpace::project(const TimeGrid& grid, const Vec& c) const {
  return c.cwiseMax(lower(grid)).cwiseMin(upper(grid));
}

Mat ControlSpace::basis_matrix(const TimeGrid& grid) const {
  if (!is_param()) throw std::logic_error("basis_matrix: not a parameter family");
  const int n = grid.intervals();
  Mat b(n * dim_, param_count());
  for (int p = 0; p < param_count(); ++p) {
    for (int k = 0; k < n; ++k) {
      const Vec v = basis_[p](grid.midpoint(k));
      if (v.size() != dim_) throw std::invalid_argument("basis: inconsistent dimension");
      b.block(k * dim_, p, dim_, 1) = v;
    }
  }
  return b;
}

Control ControlSpace::realize(const TimeGrid& grid, const Vec& c) const {
  if (c.size() != unknowns(grid)) {
    throw std::invalid_argument("control space: wrong number of unknowns");
  }
  const int n = grid.intervals();
  Mat values(n, dim_);
  if (is_param()) {
    const Vec flat = basis_matrix(grid) * c;
    for (int k = 0; k < n; ++k) values.row(k) = flat.segment(k * dim_, dim_).transpose();
  } else {
    for (int k = 0; k < n; ++k) values.row(k) = c.segment(k * dim_, dim_).transpose();
  }
  return Control(grid, std::move(values));
}

Vec ControlSpace::unknowns_of(const Control& u) const {
  if (is_param()) throw std::logic_error("unknowns_of: parameter family");
  Vec c(u.grid().intervals() * dim_);
  for (int k = 0; k < u.grid().intervals(); ++k) c.segment(k * dim_, dim_) = u.value(k);
  return c;
}

double control_norm(const Control& u) {
  return std::sqrt(u.grid().dt() * u.values().squaredNorm());
}

// ---------------------------------------------------------------- objective

namespace {

// E_eps over the packed unknowns x = (y_1..y_N, control unknowns, w_0..w_{N-1}).
class Objective {
 public:
  Objective(const TargetFunctional& F, const PenaltySpec& spec, double eps,
            const ControlSpace& space, const TimeGrid& grid, double scale)
      : model_(F, spec, grid),
        space_(space),
        grid_(grid),
        eps_(eps),
        scale_(scale),
        d_(spec.dim()),
        n_(grid.intervals()) {
    if (!(eps > 0.0)) throw std::invalid_argument("minimize: eps must be positive");
    if (!(scale > 0.0)) throw std::invalid_argument("minimize: scale must be positive");
    if (space.dim() != d_) {
      throw std::invalid_argument("minimize: control and state dimensions differ");
    }
    n_y_ = n_ * d_;
    n_c_ = space.unknowns(grid);
    n_w_ = spec.needs_auxiliary() ? n_ * d_ : 0;
    if (space.is_param()) basis_ = space.basis_matrix(grid);
    lower_ = Vec::Constant(size(), -kInf);
    upper_ = Vec::Constant(size(), kInf);
    lower_.segment(n_y_, n_c_) = space.lower(grid);
    upper_.segment(n_y_, n_c_) = space.upper(grid);
    y0_ = spec.y0;
  }

  int size() const { return n_y_ + n_c_ + n_w_; }
  int state_size() const { return n_y_; }
  int control_size() const { return n_c_; }
  int aux_size() const { return n_w_; }
  const Vec& lower() const { return lower_; }
  const Vec& upper() const { return upper_; }
  const LocalModel& model() const { return model_; }

  Vec pack(const Trajectory& y, const Vec& c, const std::optional<Control>& w) const {
    Vec x = Vec::Zero(size());
    for (int k = 1; k <= n_; ++k) x.segment((k - 1) * d_, d_) = y.node(k);
    x.segment(n_y_, n_c_) = c;
    if (n_w_ > 0) {
      if (!w) throw std::invalid_argument("minimize: auxiliary w missing");
      for (int k = 0; k < n_; ++k) x.segment(n_y_ + n_c_ + k * d_, d_) = w->value(k);
    }
    return x;
  }

  Vec node(const Vec& x, int k) const {
    return k == 0 ? y0_ : Vec(x.segment((k - 1) * d_, d_));
  }
  Vec control_at(const Vec& x, int k) const {
    if (space_.is_param()) return basis_.block(k * d_, 0, d_, n_c_) * x.segment(n_y_, n_c_);
    return x.segment(n_y_ + k * d_, d_);
  }
  Vec aux_at(const Vec& x, int k) const {
    if (n_w_ == 0) return Vec::Zero(d_);
    return x.segment(n_y_ + n_c_ + k * d_, d_);
  }
  Vec controls(const Vec& x) const { return x.segment(n_y_, n_c_); }

  Trajectory trajectory(const Vec& x) const {
    Mat nodes(n_ + 1, d_);
    for (int k = 0; k <= n_; ++k) nodes.row(k) = node(x, k).transpose();
    return Trajectory(grid_, std::move(nodes));
  }
  std::optional<Control> aux(const Vec& x) const {
    if (n_w_ == 0) return std::nullopt;
    Mat w(n_, d_);
    for (int k = 0; k < n_; ++k) w.row(k) = aux_at(x, k).transpose();
    return Control(grid_, std::move(w));
  }

  struct Parts {
    double f = 0.0, g = 0.0, r = 0.0;
  };

  Parts parts(const Vec& x) const {
    Parts p;
    for (int k = 0; k < n_; ++k) {
      const LocalTerms t = model_.terms(k, node(x, k), node(x, k + 1), control_at(x, k),
                                        aux_at(x, k));
      if (!t.infinite_term.empty()) {
        p.g = kInf;
        return p;
      }
      p.f += t.f;
      p.g += t.g();
      p.r += t.aug;
    }
    if (space_.is_param()) p.f += model_.target().param_term(controls(x));
    if (!model_.has_aug()) p.r = 0.0;
    return p;
  }

  double combine(const Parts& p) const {
    if (!std::isfinite(p.g) || !std::isfinite(p.f)) return kInf;
    return scale_ * (p.f + (p.g + std::max(p.r, 0.0)) / eps_);
  }

  double value(const Vec& x) const {
    try {
      return combine(parts(x));
    } catch (const DomainError&) {
      return kInf;
    }
  }

  // Local gradient of E_eps w.r.t. z = (a, b, u_k[, w_k]).
  Vec local_gradient(int k, const Vec& z, bool active) const {
    const int d = d_;
    const LocalGradient lg = model_.gradient(k, z.segment(0, d), z.segment(d, d),
                                             z.segment(2 * d, d),
                                             n_w_ > 0 ? Vec(z.segment(3 * d, d)) : Vec::Zero(d));
    Vec out = lg.f + lg.g / eps_;
    if (active) out += lg.aug / eps_;
    return scale_ * out;
  }

  Vec local_point(const Vec& x, int k) const {
    Vec z(model_.local_size());
    z.segment(0, d_) = node(x, k);
    z.segment(d_, d_) = node(x, k + 1);
    z.segment(2 * d_, d_) = control_at(x, k);
    if (n_w_ > 0) z.segment(3 * d_, d_) = aux_at(x, k);
    return z;
  }

  // Global index/coefficient lists for each local variable.
  std::vector<std::vector<std::pair<int, double>>> local_map(int k) const {
    std::vector<std::vector<std::pair<int, double>>> map(model_.local_size());
    for (int j = 0; j < d_; ++j) {
      if (k > 0) map[j].push_back({(k - 1) * d_ + j, 1.0});
      map[d_ + j].push_back({k * d_ + j, 1.0});
      if (space_.is_param()) {
        for (int p = 0; p < n_c_; ++p) {
          const double c = basis_(k * d_ + j, p);
          if (c != 0.0) map[2 * d_ + j].push_back({n_y_ + p, c});
        }
      } else {
        map[2 * d_ + j].push_back({n_y_ + k * d_ + j, 1.0});
      }
      if (n_w_ > 0) map[3 * d_ + j].push_back({n_y_ + n_c_ + k * d_ + j, 1.0});
    }
    return map;
  }

  double value_gradient(const Vec& x, Vec& g) const {
    const Parts p = parts(x);
    const double e = combine(p);
    if (!std::isfinite(e)) throw EvaluationError("gradient requested at +inf");
    const bool active = model_.has_aug() && p.r > 0.0;
    g = Vec::Zero(size());
    for (int k = 0; k < n_; ++k) {
      const Vec lg = local_gradient(k, local_point(x, k), active);
      const auto map = local_map(k);
      for (int i = 0; i < lg.size(); ++i) {
        for (const auto& [gi, c] : map[i]) g(gi) += c * lg(i);
      }
    }
    if (space_.is_param()) {
      g.segment(n_y_, n_c_) += scale_ * model_.target().param_grad(controls(x));
    }
    return e;
  }

  SpMat hessian(const Vec& x) const {
    const Parts p = parts(x);
    const bool active = model_.has_aug() && p.r > 0.0;
    std::vector<Triplet> trips;
    const int m = model_.local_size();
    Mat h(m, m);
    for (int k = 0; k < n_; ++k) {
      const Vec z = local_point(x, k);
      for (int i = 0; i < m; ++i) {
        const double step = 1e-6 * (1.0 + std::abs(z(i)));
        Vec zp = z, zm = z;
        zp(i) += step;
        zm(i) -= step;
        h.col(i) = (local_gradient(k, zp, active) - local_gradient(k, zm, active)) /
                   (2.0 * step);
      }
      const Mat hs = 0.5 * (h + h.transpose());
      const auto map = local_map(k);
      for (int i = 0; i < m; ++i) {
        for (int l = 0; l < m; ++l) {
          if (hs(i, l) == 0.0) continue;
          for (const auto& [gi, ci] : map[i]) {
            for (const auto& [gl, cl] : map[l]) trips.emplace_back(gi, gl, ci * cl * hs(i, l));
          }
        }
      }
    }
    if (space_.is_param() && model_.target().param_weight != 0.0) {
      for (int q = 0; q < n_c_; ++q) {
        trips.emplace_back(n_y_ + q, n_y_ + q, scale_ * model_.target().param_weight);
      }
    }
    SpMat out(size(), size());
    out.setFromTriplets(trips.begin(), trips.end());
    return out;
  }

 private:
  LocalModel model_;
  const ControlSpace& space_;
  TimeGrid grid_;
  double eps_;
  double scale_;
  int d_;
  int n_;
  int n_y_ = 0, n_c_ = 0, n_w_ = 0;
  Mat basis_;
  Vec lower_, upper_;
  Vec y0_;
};

// ---------------------------------------------------------------- descent

struct RunResult {
  Vec x;
  double E = kInf;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  double pg = kInf;
  std::vector<double> history;
  std::string message;
};

Vec project_box(const Vec& x, const Vec& lo, const Vec& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

// Newton direction on the free variables; diagonally scaled steepest descent
// on the active ones.
Vec newton_direction(const Objective& obj, const Vec& x, const Vec& g,
                     const std::vector<char>& free, const std::vector<char>& mask) {
  const int n = obj.size();
  SpMat h = obj.hessian(x);
  std::vector<int> index(n, -1);
  int nf = 0;
  for (int i = 0; i < n; ++i) {
    if (free[i]) index[i] = nf++;
  }
  Vec diag = h.diagonal();
  Vec d = Vec::Zero(n);
  for (int i = 0; i < n; ++i) {
    if (mask[i] && !free[i]) d(i) = -g(i) / (diag(i) > 0.0 ? diag(i) : 1.0);
  }
  if (nf == 0) return d;
  std::vector<Triplet> trips;
  double max_diag = 0.0;
  for (int col = 0; col < h.outerSize(); ++col) {
    for (SpMat::InnerIterator it(h, col); it; ++it) {
      const int r = static_cast<int>(it.row());
      const int c = static_cast<int>(it.col());
      if (index[r] >= 0 && index[c] >= 0) {
        trips.emplace_back(index[r], index[c], it.value());
        if (r == c) max_diag = std::max(max_diag, std::abs(it.value()));
      }
    }
  }
  Vec gf(nf);
  for (int i = 0; i < n; ++i) {
    if (index[i] >= 0) gf(index[i]) = g(i);
  }
  SpMat hf(nf, nf);
  hf.setFromTriplets(trips.begin(), trips.end());
  SpMat eye(nf, nf);
  eye.setIdentity();
  double shift = 0.0;
  const double base = std::max(max_diag, 1e-300);
  for (int attempt = 0; attempt < 40; ++attempt) {
    Eigen::SimplicialLDLT<SpMat> ldlt;
    ldlt.compute(shift > 0.0 ? SpMat(hf + shift * eye) : hf);
    bool ok = ldlt.info() == Eigen::Success;
    if (ok) {
      const Vec dd = ldlt.vectorD();
      ok = dd.allFinite() && dd.minCoeff() > 1e-13 * base;
    }
    if (ok) {
      const Vec df = ldlt.solve(-gf);
      if (df.allFinite() && df.dot(gf) < 0.0) {
        for (int i = 0; i < n; ++i) {
          if (index[i] >= 0) d(i) = df(index[i]);
        }
        return d;
      }
    }
    shift = shift == 0.0 ? 1e-10 * base : 10.0 * shift;
  }
  for (int i = 0; i < n; ++i) {
    if (index[i] >= 0) d(i) = -g(i) / base;
  }
  return d;
}

RunResult run_descent(const Objective& obj, Vec x, const std::vector<char>& mask,
                      const MinimizeOptions& opts) {
  RunResult out;
  const Vec& lo = obj.lower();
  const Vec& hi = obj.upper();
  const int n = obj.size();
  x = project_box(x, lo, hi);
  Vec g;
  double e = obj.value(x);
  ++out.evaluations;
  if (!std::isfinite(e)) throw SolverError("minimize: infeasible start (E = +inf)");
  obj.value_gradient(x, g);
  out.history.push_back(e);

  std::deque<std::pair<Vec, Vec>> memory;  // L-BFGS (s, y)
  double bb_step = 0.0;
  Vec x_prev, g_prev;

  for (int it = 0; it <= opts.max_iterations; ++it) {
    Vec pg = Vec::Zero(n);
    for (int i = 0; i < n; ++i) {
      if (mask[i]) pg(i) = x(i) - std::clamp(x(i) - g(i), lo(i), hi(i));
    }
    out.pg = pg.lpNorm<Eigen::Infinity>();
    if (out.pg <= opts.gtol * (1.0 + std::abs(e))) {
      out.converged = true;
      break;
    }
    if (it == opts.max_iterations) {
      out.message = "iteration cap reached";
      break;
    }
    out.iterations = it + 1;

    const double delta = out.pg;
    std::vector<char> free(n, 0);
    for (int i = 0; i < n; ++i) {
      if (!mask[i]) continue;
      const double band = std::min(delta, 1e-8 * (hi(i) - lo(i)));
      const bool at_lo = x(i) <= lo(i) + band && g(i) > 0.0;
      const bool at_hi = x(i) >= hi(i) - band && g(i) < 0.0;
      free[i] = !(at_lo || at_hi);
    }

    Vec d = Vec::Zero(n);
    Vec gm = Vec::Zero(n);
    for (int i = 0; i < n; ++i) {
      if (mask[i]) gm(i) = g(i);
    }
    switch (opts.policy) {
      case StepPolicy::Newton:
        try {
          d = newton_direction(obj, x, g, free, mask);
        } catch (const Error&) {
          d = -gm;
        }
        break;
      case StepPolicy::LBFGS: {
        Vec q = gm;
        for (int i = 0; i < n; ++i) {
          if (!free[i]) q(i) = 0.0;
        }
        std::vector<double> alpha(memory.size());
        for (int j = static_cast<int>(memory.size()) - 1; j >= 0; --j) {
          const auto& [s, yv] = memory[j];
          alpha[j] = s.dot(q) / yv.dot(s);
          q -= alpha[j] * yv;
        }
        if (!memory.empty()) {
          const auto& [s, yv] = memory.back();
          q *= s.dot(yv) / yv.squaredNorm();
        } else {
          q /= std::max(1.0, gm.lpNorm<Eigen::Infinity>());
        }
        for (std::size_t j = 0; j < memory.size(); ++j) {
          const auto& [s, yv] = memory[j];
          const double beta = yv.dot(q) / yv.dot(s);
          q += (alpha[j] - beta) * s;
        }
        for (int i = 0; i < n; ++i) {
          if (!free[i]) q(i) = mask[i] ? g(i) : 0.0;
        }
        d = -q;
        break;
      }
      case StepPolicy::Spectral: {
        const double step =
            bb_step > 0.0 ? bb_step : 1.0 / std::max(1.0, gm.lpNorm<Eigen::Infinity>());
        d = -step * gm;
        break;
      }
    }
    if (!(d.dot(gm) < 0.0) || !d.allFinite()) {
      d = -gm / std::max(1.0, gm.lpNorm<Eigen::Infinity>());
      memory.clear();
    }

    // projected backtracking
    double t = 1.0;
    Vec trial;
    double et = kInf;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      trial = project_box(x + t * d, lo, hi);
      et = obj.value(trial);
      ++out.evaluations;
      if (std::isfinite(et) && et <= e + 1e-4 * g.dot(trial - x)) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      // round-off floor: accept a non-increasing step if one exists
      if (std::isfinite(et) && et <= e && (trial - x).lpNorm<Eigen::Infinity>() > 0.0) {
        accepted = true;
      } else {
        out.message = "line search failed";
        break;
      }
    }
    Vec g_new;
    obj.value_gradient(trial, g_new);
    const Vec s = trial - x;
    const Vec yv = g_new - g;
    if (opts.policy == StepPolicy::LBFGS && s.dot(yv) > 1e-12 * s.norm() * yv.norm()) {
      memory.emplace_back(s, yv);
      if (static_cast<int>(memory.size()) > opts.lbfgs_memory) memory.pop_front();
    }
    if (opts.policy == StepPolicy::Spectral) {
      const double sy = s.dot(yv);
      bb_step = sy > 0.0 ? s.squaredNorm() / sy : 0.0;
    }
    const bool stalled = e - et <= 1e-16 * (1.0 + std::abs(e)) &&
                         s.lpNorm<Eigen::Infinity>() <= 1e-15 * (1.0 + x.lpNorm<Eigen::Infinity>());
    x = std::move(trial);
    e = et;
    g = std::move(g_new);
    out.history.push_back(e);
    if (stalled) {
      out.message = "no further progress";
      // final projected-gradient check happens on the next pass
      Vec pg2 = Vec::Zero(n);
      for (int i = 0; i < n; ++i) {
        if (mask[i]) pg2(i) = x(i) - std::clamp(x(i) - g(i), lo(i), hi(i));
      }
      out.pg = pg2.lpNorm<Eigen::Infinity>();
      out.converged = out.pg <= opts.gtol * (1.0 + std::abs(e));
      break;
    }
  }
  out.x = std::move(x);
  out.E = e;
  return out;
}

std::vector<char> make_mask(const Objective& obj, bool state, bool control) {
  std::vector<char> mask(obj.size(), 0);
  for (int i = 0; i < obj.state_size(); ++i) mask[i] = state;
  for (int i = 0; i < obj.control_size(); ++i) mask[obj.state_size() + i] = control;
  for (int i = 0; i < obj.aux_size(); ++i) {
    mask[obj.state_size() + obj.control_size() + i] = state;
  }
  return mask;
}

StartPoint cold_start(const PenaltySpec& spec, const ControlSpace& space,
                      const TimeGrid& grid, const Vec& c) {
  const Control u = space.realize(grid, c);
  StartPoint sp;
  sp.control = c;
  sp.y = constraint_state(spec, u);
  if (spec.needs_auxiliary()) sp.w = rate_auxiliary(*spec.rate, *sp.y);
  return sp;
}

MinimizeResult finish(const Objective& obj, const TargetFunctional& F,
                      const PenaltySpec& spec, const ControlSpace& space,
                      const TimeGrid& grid, const RunResult& run) {
  Vec c = obj.controls(run.x);
  Control u = space.realize(grid, c);
  Trajectory y = obj.trajectory(run.x);
  std::optional<Control> w = obj.aux(run.x);
  GValue g = eval_G(spec, u, y, w ? &*w : nullptr);
  MinimizeReport rep;
  rep.iterations = run.iterations;
  rep.evaluations = run.evaluations;
  rep.converged = run.converged;
  rep.projected_gradient = run.pg;
  rep.history = run.history;
  rep.message = run.message;
  rep.F = eval_F(F, u, y, space.is_param() ? &c : nullptr);
  rep.G = g.total;
  rep.E = run.E;
  return MinimizeResult{std::move(c), std::move(u), std::move(y), std::move(w),
                        std::move(g), std::move(rep)};
}

}  // namespace

// ---------------------------------------------------------------- public

Trajectory constraint_state(const PenaltySpec& spec, const Control& u, Scheme scheme) {
  spec.validate();
  switch (spec.kind) {
    case PenaltyKind::BEN:
    case PenaltyKind::BEN_AUG:
    case PenaltyKind::DG:
      return forward_solve(*spec.potential, spec.y0, u, scheme);
    case PenaltyKind::BEN_DN:
    case PenaltyKind::DG_RATE:
      return forward_solve_rate(*spec.potential, *spec.rate, spec.y0, u);
    case PenaltyKind::DG_GENERIC:
      return integrate_generic(*spec.system, spec.y0, u);
  }
  throw std::logic_error("constraint_state: unknown kind");
}

MinimizeResult minimize_penalized(const TargetFunctional& F, const PenaltySpec& spec,
                                  double eps, const ControlSpace& space,
                                  const TimeGrid& grid, const MinimizeOptions& opts) {
  if (opts.alternate) {
    MinimizeOptions inner = opts;
    inner.alternate = false;
    return alternate_minimize_ben(F, spec, eps, space, grid, inner);
  }
  if (!(opts.gtol > 0.0)) throw std::invalid_argument("minimize: gtol must be positive");
  if (spec.kind == PenaltyKind::DG_GENERIC) {
    throw DomainError("minimize: penalized control of GENERIC systems is not supported");
  }
  Objective obj(F, spec, eps, space, grid, opts.objective_scale);
  const auto mask = make_mask(obj, opts.optimize_state, opts.optimize_control);

  std::vector<StartPoint> starts;
  if (opts.start) {
    StartPoint sp = *opts.start;
    if (!sp.y) {
      sp.y = constraint_state(spec, space.realize(grid, sp.control));
    }
    if (spec.needs_auxiliary() && !sp.w) sp.w = rate_auxiliary(*spec.rate, *sp.y);
    starts.push_back(std::move(sp));
  } else {
    starts.push_back(cold_start(spec, space, grid, space.center(grid)));
    if (opts.optimize_control) {
      std::mt19937_64 rng(opts.seed);
      const Vec lo = space.lower(grid);
      const Vec hi = space.upper(grid);
      for (int s = 1; s < opts.multistart; ++s) {
        Vec c(lo.size());
        for (long i = 0; i < c.size(); ++i) {
          std::uniform_real_distribution<double> dist(lo(i), hi(i));
          c(i) = lo(i) == hi(i) ? lo(i) : dist(rng);
        }
        try {
          starts.push_back(cold_start(spec, space, grid, c));
        } catch (const Error&) {
          // a random control whose forward problem fails is skipped
        }
      }
    }
  }

  std::optional<RunResult> best;
  std::string last_error;
  for (const auto& sp : starts) {
    try {
      RunResult run = run_descent(obj, obj.pack(*sp.y, sp.control, sp.w), mask, opts);
      if (!best || run.E < best->E - 1e-12 * (1.0 + std::abs(run.E))) best = std::move(run);
    } catch (const SolverError& e) {
      last_error = e.what();
    }
  }
  if (!best) throw SolverError(last_error.empty() ? "minimize: no start succeeded" : last_error);
  return finish(obj, F, spec, space, grid, *best);
}

MinimizeResult minimize_state(const TargetFunctional& F, const PenaltySpec& spec,
                              double eps, const ControlSpace& space,
                              const TimeGrid& grid, const Vec& c,
                              const MinimizeOptions& opts) {
  MinimizeOptions inner = opts;
  inner.alternate = false;
  inner.optimize_control = false;
  inner.optimize_state = true;
  if (!inner.start) {
    inner.start = StartPoint{c, std::nullopt, std::nullopt};
  } else {
    inner.start->control = c;
  }
  return minimize_penalized(F, spec, eps, space, grid, inner);
}

MinimizeResult alternate_minimize_ben(const TargetFunctional& F,
                                      const PenaltySpec& spec, double eps,
                                      const ControlSpace& space, const TimeGrid& grid,
                                      const MinimizeOptions& opts) {
  if (spec.kind != PenaltyKind::BEN && spec.kind != PenaltyKind::BEN_AUG) {
    throw std::invalid_argument("alternate minimization needs BEN or BEN_AUG");
  }
  Objective obj(F, spec, eps, space, grid, opts.objective_scale);
  StartPoint sp = opts.start ? *opts.start : cold_start(spec, space, grid, space.center(grid));
  if (!sp.y) sp.y = constraint_state(spec, space.realize(grid, sp.control));
  Vec x = obj.pack(*sp.y, sp.control, sp.w);

  const auto mask_y = make_mask(obj, true, false);
  const auto mask_u = make_mask(obj, false, true);
  RunResult total;
  total.x = x;
  total.E = obj.value(x);
  if (!std::isfinite(total.E)) throw SolverError("alternate: infeasible start (E = +inf)");
  total.history.push_back(total.E);

  const int max_cycles = std::max(opts.max_iterations, 1) * 20;
  for (int cycle = 0; cycle < max_cycles; ++cycle) {
    const double before = total.E;
    RunResult ry = run_descent(obj, total.x, mask_y, opts);
    total.evaluations += ry.evaluations;
    total.history.push_back(ry.E);
    RunResult ru = run_descent(obj, ry.x, mask_u, opts);
    total.evaluations += ru.evaluations;
    total.history.push_back(ru.E);
    total.x = ru.x;
    total.E = ru.E;
    total.iterations = cycle + 1;
    if (before - total.E <= 1e-12) {
      total.converged = true;
      break;
    }
  }
  if (!total.converged) total.message = "cycle cap reached";
  // projected gradient of the joint problem at the final point
  Vec g;
  obj.value_gradient(total.x, g);
  Vec pg = total.x - project_box(total.x - g, obj.lower(), obj.upper());
  total.pg = pg.lpNorm<Eigen::Infinity>();
  return finish(obj, F, spec, space, grid, total);
}

// ---------------------------------------------------------------- reference

ReferenceResult solve_reference(const TargetFunctional& F, const PenaltySpec& spec,
                                const ControlSpace& space, double horizon,
                                const ReferenceOptions& opts) {
  if (!space.is_param()) {
    throw Error("solve_reference: free nodal control spaces are not supported in "
                "reference mode");
  }
  if (space.param_count() > 4) {
    throw Error("solve_reference: at most 4 parameters are supported");
  }
  const TimeGrid grid(horizon, opts.intervals);
  int evals = 0;
  auto objective = [&](const Vec& c) {
    ++evals;
    const Control u = space.realize(grid, c);
    return eval_F(F, u, constraint_state(spec, u, opts.scheme), &c);
  };
  const Vec lo = space.lower(grid);
  const Vec hi = space.upper(grid);
  Vec best;

  if (space.param_count() == 1) {
    const double a = lo(0), b = hi(0);
    auto f1 = [&](double p) { return objective(Vec::Constant(1, p)); };
    if (a == b) {
      best = Vec::Constant(1, a);
    } else {
      const int m = std::max(opts.scan_points, 3);
      std::vector<double> xs(m), fs(m);
      int imin = 0;
      for (int i = 0; i < m; ++i) {
        xs[i] = a + (b - a) * i / (m - 1);
        fs[i] = f1(xs[i]);
        if (fs[i] < fs[imin]) imin = i;
      }
      double l = xs[std::max(imin - 1, 0)];
      double r = xs[std::min(imin + 1, m - 1)];
      const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
      double c = r - invphi * (r - l);
      double d = l + invphi * (r - l);
      double fc = f1(c), fd = f1(d);
      while (r - l > opts.param_tol) {
        if (fc <= fd) {  // ties go left
          r = d;
          d = c;
          fd = fc;
          c = r - invphi * (r - l);
          fc = f1(c);
        } else {
          l = c;
          c = d;
          fc = fd;
          d = l + invphi * (r - l);
          fd = f1(d);
        }
      }
      // refinement: best of the final bracket and the scan minimum
      double px = 0.5 * (l + r);
      double pf = f1(px);
      for (const auto& [x, fx] : {std::pair{l, f1(l)}, std::pair{r, f1(r)}}) {
        if (fx < pf || (fx == pf && x < px)) {
          px = x;
          pf = fx;
        }
      }
      if (fs[imin] < pf) px = xs[imin];
      best = Vec::Constant(1, px);
    }
  } else {
    // projected BFGS with central-difference gradients
    const int p = space.param_count();
    Vec c = space.center(grid);
    auto grad = [&](const Vec& x) {
      Vec g(p);
      for (int i = 0; i < p; ++i) {
        const double h = 1e-6 * (1.0 + std::abs(x(i)));
        Vec xp = x, xm = x;
        xp(i) += h;
        xm(i) -= h;
        g(i) = (objective(xp) - objective(xm)) / (2.0 * h);
      }
      return g;
    };
    Mat hinv = Mat::Identity(p, p);
    double fc = objective(c);
    Vec g = grad(c);
    for (int it = 0; it < 200; ++it) {
      const Vec pg = c - project_box(c - g, lo, hi);
      if (pg.lpNorm<Eigen::Infinity>() <= 1e-10 * (1.0 + std::abs(fc))) break;
      Vec d = -hinv * g;
      if (d.dot(g) >= 0.0) {
        hinv.setIdentity();
        d = -g;
      }
      double t = 1.0;
      Vec trial = project_box(c + d, lo, hi);
      double ft = objective(trial);
      while (!(ft <= fc + 1e-4 * g.dot(trial - c)) && t > 1e-12) {
        t *= 0.5;
        trial = project_box(c + t * d, lo, hi);
        ft = objective(trial);
      }
      if (!(ft <= fc)) break;
      const Vec gn = grad(trial);
      const Vec s = trial - c;
      const Vec yv = gn - g;
      const double sy = s.dot(yv);
      if (sy > 1e-14) {
        const Mat eye = Mat::Identity(p, p);
        const double rho = 1.0 / sy;
        hinv = (eye - rho * s * yv.transpose()) * hinv * (eye - rho * yv * s.transpose()) +
               rho * s * s.transpose();
      }
      const bool small = s.lpNorm<Eigen::Infinity>() <= opts.param_tol;
      c = trial;
      fc = ft;
      g = gn;
      if (small) break;
    }
    best = c;
  }
  const Control u = space.realize(grid, best);
  Trajectory y = constraint_state(spec, u, opts.scheme);
  const double f = eval_F(F, u, y, &best);
  return ReferenceResult{best, std::move(y), f, evals + 1};
}

// ---------------------------------------------------------------- sweep

std::string SweepReport::csv_header() { return "eps,param_or_norm_u,E,F,G,iters,converged"; }

void SweepReport::write_csv(std::ostream& os) const {
  os << csv_header() << '\n';
  auto row = [&](const SweepEntry& e) {
    os << format_double(e.eps) << ',' << format_double(e.param_or_norm_u) << ','
       << format_double(e.E) << ',' << format_double(e.F) << ',' << format_double(e.G)
       << ',' << e.iterations << ',' << (e.converged ? 1 : 0) << '\n';
  };
  for (const auto& e : entries) row(e);
  row(reference);
}

namespace {

SweepEntry entry_from(double eps, const ControlSpace& space, const MinimizeResult& r) {
  SweepEntry e;
  e.eps = eps;
  e.control = r.control;
  e.u = r.u;
  e.y = r.y;
  e.param_or_norm_u =
      space.is_param() && space.param_count() == 1 ? r.control(0) : control_norm(r.u);
  e.E = r.report.E;
  e.F = r.report.F;
  e.G = r.report.G;
  e.iterations = r.report.iterations;
  e.converged = r.report.converged;
  return e;
}

}  // namespace

SweepReport epsilon_sweep(const TargetFunctional& F, const PenaltySpec& spec,
                          const ControlSpace& space, const TimeGrid& grid,
                          const std::vector<double>& eps_list,
                          const MinimizeOptions& opts, const SweepOptions& sweep) {
  if (eps_list.empty()) throw std::invalid_argument("sweep: empty eps list");
  for (std::size_t i = 0; i < eps_list.size(); ++i) {
    if (!(eps_list[i] > 0.0)) throw std::invalid_argument("sweep: eps must be positive");
    if (i > 0 && !(eps_list[i] < eps_list[i - 1])) {
      throw std::invalid_argument("sweep: eps list must be strictly decreasing");
    }
  }
  SweepReport rep;
  rep.entries.resize(eps_list.size());
  auto run_one = [&](std::size_t i, const MinimizeOptions& o) {
    SweepEntry& e = rep.entries[i];
    e.eps = eps_list[i];
    try {
      e = entry_from(eps_list[i], space, minimize_penalized(F, spec, eps_list[i], space, grid, o));
    } catch (const Error& err) {
      e.error = err.what();
    }
  };

  if (sweep.warm_start) {
    MinimizeOptions o = opts;
    for (std::size_t i = 0; i < eps_list.size(); ++i) {
      run_one(i, o);
      const SweepEntry& e = rep.entries[i];
      if (e.error.empty()) {
        StartPoint sp{space.is_param() ? e.control : space.unknowns_of(*e.u), e.y,
                      std::nullopt};
        if (spec.needs_auxiliary()) sp.w = rate_auxiliary(*spec.rate, *e.y);
        o.start = sp;
      }
    }
  } else {
    const int jobs = std::max(1, sweep.jobs);
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) {
      pool.emplace_back([&, j] {
        for (std::size_t i = j; i < eps_list.size(); i += jobs) run_one(i, opts);
      });
    }
    for (auto& t : pool) t.join();
  }

  rep.reference.eps = 0.0;
  try {
    ReferenceResult ref = solve_reference(F, spec, space, grid.horizon(), sweep.reference);
    const TimeGrid rg(grid.horizon(), sweep.reference.intervals);
    rep.reference.control = ref.params;
    rep.reference.u = space.realize(rg, ref.params);
    rep.reference.param_or_norm_u =
        space.param_count() == 1 ? ref.params(0) : control_norm(*rep.reference.u);
    rep.reference.y = std::move(ref.y);
    rep.reference.E = ref.F;
    rep.reference.F = ref.F;
    rep.reference.G = 0.0;
    rep.reference.iterations = ref.evaluations;
    rep.reference.converged = true;
  } catch (const Error& err) {
    rep.reference.error = err.what();
  }

  double max_e = 0.0;
  for (const auto& e : rep.entries) {
    if (e.error.empty()) max_e = std::max(max_e, e.E);
  }
  for (std::size_t i = 0; i < rep.entries.size(); ++i) {
    const auto& e = rep.entries[i];
    if (!e.error.empty()) continue;
    if (e.G / e.eps > 2.0 * max_e) rep.g_bounded = false;
    if (i > 0 && rep.entries[i - 1].error.empty() &&
        e.G > 1.1 * rep.entries[i - 1].G + 1e-14) {
      rep.g_monotone = false;
    }
  }
  return rep;
}

// ---------------------------------------------------------------- curves

std::vector<CurvePoint> energy_curve(const TargetFunctional& F, const PenaltySpec& spec,
                                     double eps, const ControlSpace& space,
                                     const TimeGrid& grid, int points, int jobs) {
  if (!space.is_param() || space.param_count() != 1) {
    throw std::invalid_argument("curve: needs a one-parameter control space");
  }
  if (points < 2) throw std::invalid_argument("curve: need at least 2 points");
  if (eps < 0.0) throw std::invalid_argument("curve: eps must be >= 0");
  const double lo = space.lower(grid)(0);
  const double hi = space.upper(grid)(0);
  std::vector<CurvePoint> out(points);
  std::vector<std::string> errors(points);
  MinimizeOptions opts;
  opts.multistart = 1;
  auto eval_point = [&](int i) {
    const double p = lo + (hi - lo) * i / (points - 1);
    const Vec c = Vec::Constant(1, p);
    out[i].eps = eps;
    out[i].param = p;
    try {
      if (eps == 0.0) {
        const Control u = space.realize(grid, c);
        out[i].E = eval_F(F, u, constraint_state(spec, u), &c);
      } else {
        out[i].E = minimize_state(F, spec, eps, space, grid, c, opts).report.E;
      }
    } catch (const Error& e) {
      errors[i] = e.what();
    }
  };
  jobs = std::max(1, jobs);
  std::vector<std::thread> pool;
  for (int j = 0; j < jobs; ++j) {
    pool.emplace_back([&, j] {
      for (int i = j; i < points; i += jobs) eval_point(i);
    });
  }
  for (auto& t : pool) t.join();
  for (int i = 0; i < points; ++i) {
    if (!errors[i].empty()) throw SolverError("curve point " + std::to_string(i) + ": " + errors[i]);
  }
  return out;
}

void write_curve_csv(std::ostream& os, const std::vector<CurvePoint>& curve) {
  os << "eps,u_param,E\n";
  for (const auto& p : curve) {
    os << format_double(p.eps) << ',' << format_double(p.param) << ',' << format_double(p.E)
       << '\n';
  }
}

}  // namespace varpen
