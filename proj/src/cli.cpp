#include "varpen/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>

#include "varpen/config.hpp"

namespace varpen {

namespace {

std::string eps_tag(double eps) {
  std::ostringstream os;
  os << eps;
  return os.str();
}

std::ofstream open_out(const std::string& dir, const std::string& name) {
  std::filesystem::create_directories(dir);
  std::ofstream os(std::filesystem::path(dir) / name);
  if (!os) throw std::runtime_error("cannot write " + name + " in " + dir);
  return os;
}

double golden_min(const std::function<double(double)>& f, double lo, double hi, double tol) {
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = hi - invphi * (hi - lo);
  double d = lo + invphi * (hi - lo);
  double fc = f(c), fd = f(d);
  while (hi - lo > tol) {
    if (fc <= fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - invphi * (hi - lo);
      fc = f(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + invphi * (hi - lo);
      fd = f(d);
    }
  }
  return 0.5 * (lo + hi);
}

bool strictly_convex(const std::vector<CurvePoint>& c) {
  for (std::size_t i = 1; i + 1 < c.size(); ++i) {
    if (!(c[i - 1].E - 2.0 * c[i].E + c[i + 1].E > 0.0)) return false;
  }
  return true;
}

void check_approach(const FigureResult& r, double target, std::vector<std::string>& fails) {
  for (std::size_t i = 1; i < r.minimizers.size(); ++i) {
    if (std::abs(r.minimizers[i].argmin - target) >
        std::abs(r.minimizers[i - 1].argmin - target) + 1e-9) {
      fails.push_back("minimizers do not approach " + format_double(target) + " at eps = " +
                      eps_tag(r.minimizers[i].eps));
      return;
    }
  }
}

}  // namespace

FigureResult reproduce_fig1(int jobs, bool with_curves) {
  FigureResult r;
  r.figure = "fig1";
  const std::vector<double> eps_list{2.0, 1.0, 0.5, 0.1};
  const Problem pb = linear_problem(PenaltyKind::BEN, 1.0, 3200);
  const TimeGrid ref_grid(pb.horizon, pb.intervals);
  for (double eps : eps_list) {
    auto value = [eps](double u0) { return LinearClosedForm(eps, u0).value(); };
    if (with_curves) {
      std::vector<CurvePoint> curve(201);
      for (int i = 0; i < 201; ++i) {
        const double u0 = i / 200.0;
        curve[i] = {eps, u0, value(u0)};
      }
      r.curves.push_back(std::move(curve));
    }
    const double u = golden_min(value, 0.0, 1.0, 1e-10);
    r.minimizers.push_back({eps, u, value(u)});
  }
  if (with_curves) r.curves.push_back(energy_curve(pb.F, pb.spec, 0.0, pb.space, ref_grid, 201, jobs));
  const ReferenceResult ref = solve_reference(pb.F, pb.spec, pb.space, pb.horizon);
  r.minimizers.push_back({0.0, ref.params(0), ref.F});

  const auto& last = r.minimizers.back();
  if (std::abs(last.argmin - 0.5) > 1e-3) r.failures.push_back("eps=0 argmin not within 1e-3 of 0.5");
  if (std::abs(last.min - 0.0202) > 1e-3) r.failures.push_back("eps=0 minimum not within 1e-3 of 0.0202");
  for (const auto& c : r.curves) {
    if (!strictly_convex(c)) r.failures.push_back("curve eps=" + eps_tag(c.front().eps) + " not strictly convex");
  }
  check_approach(r, 0.5, r.failures);
  return r;
}

FigureResult reproduce_fig2(int jobs, bool with_curves) {
  FigureResult r;
  r.figure = "fig2";
  const std::vector<double> eps_list{1.0, 0.5, 0.1, 0.05};
  const Problem pb = quartic_problem(PenaltyKind::DG, 400);
  const TimeGrid grid(pb.horizon, pb.intervals);
  if (with_curves) {
    for (double eps : eps_list) {
      r.curves.push_back(energy_curve(pb.F, pb.spec, eps, pb.space, grid, 201, jobs));
    }
    const TimeGrid ref_grid(pb.horizon, 3200);
    r.curves.push_back(energy_curve(pb.F, pb.spec, 0.0, pb.space, ref_grid, 201, jobs));
  }
  const SweepReport sweep = epsilon_sweep(pb.F, pb.spec, pb.space, grid, eps_list);
  for (const auto& e : sweep.entries) {
    if (!e.error.empty()) {
      r.failures.push_back("eps=" + eps_tag(e.eps) + ": " + e.error);
      continue;
    }
    r.minimizers.push_back({e.eps, e.control(0), e.E});
  }
  if (!sweep.reference.error.empty()) {
    r.failures.push_back("reference: " + sweep.reference.error);
    return r;
  }
  r.minimizers.push_back({0.0, sweep.reference.control(0), sweep.reference.F});
  const auto& last = r.minimizers.back();
  if (std::abs(last.argmin - 1.016) > 0.01) {
    r.failures.push_back("eps=0 argmin " + format_double(last.argmin) +
                         " not within 0.01 of 1.016");
  }
  if (std::abs(last.min - 0.4917) > 0.005) {
    r.failures.push_back("eps=0 minimum " + format_double(last.min) +
                         " not within 0.005 of 0.4917");
  }
  check_approach(r, last.argmin, r.failures);
  return r;
}

void write_figure(const FigureResult& result, const std::string& dir) {
  for (const auto& c : result.curves) {
    auto os = open_out(dir, "curve_eps" + eps_tag(c.front().eps) + ".csv");
    write_curve_csv(os, c);
  }
  auto os = open_out(dir, "minimizers.csv");
  os << "eps,argmin,min\n";
  for (const auto& m : result.minimizers) {
    os << format_double(m.eps) << ',' << format_double(m.argmin) << ',' << format_double(m.min)
       << '\n';
  }
}

int cmd_reproduce(const std::string& figure, const CliOptions& opts, std::ostream& log) {
  FigureResult r;
  if (figure == "fig1") {
    r = reproduce_fig1(opts.jobs);
  } else if (figure == "fig2") {
    r = reproduce_fig2(opts.jobs);
  } else {
    log << "unknown figure '" << figure << "' (expected fig1 or fig2)\n";
    return kExitUsage;
  }
  write_figure(r, opts.out);
  log << std::setw(8) << "eps" << std::setw(14) << "argmin" << std::setw(14) << "min" << '\n';
  for (const auto& m : r.minimizers) {
    log << std::setw(8) << m.eps << std::setw(14) << std::setprecision(8) << m.argmin
        << std::setw(14) << m.min << '\n';
  }
  for (const auto& f : r.failures) log << "FAILED: " << f << '\n';
  return r.ok() ? kExitOk : kExitFailure;
}

int cmd_sweep(const std::string& config_path, const CliOptions& opts, std::ostream& log) {
  RunConfig cfg;
  try {
    cfg = load_config(config_path);
  } catch (const ConfigError& e) {
    log << config_path << ": " << e.what() << '\n';
    return kExitUsage;
  }
  const Problem& pb = cfg.problem;
  const TimeGrid grid(pb.horizon, pb.intervals);
  cfg.sweep.jobs = opts.jobs;
  cfg.minimize.seed = opts.seed;
  const SweepReport rep =
      epsilon_sweep(pb.F, pb.spec, pb.space, grid, cfg.eps, cfg.minimize, cfg.sweep);
  {
    auto os = open_out(opts.out, "sweep.csv");
    rep.write_csv(os);
  }
  for (const auto& e : rep.entries) {
    if (e.y) {
      auto os = open_out(opts.out, "trajectory_eps" + eps_tag(e.eps) + ".csv");
      write_csv(os, *e.y);
    }
  }
  if (rep.reference.y) {
    auto os = open_out(opts.out, "trajectory_eps0.csv");
    write_csv(os, *rep.reference.y);
  }
  log << std::setw(8) << "eps" << std::setw(16) << "param|norm" << std::setw(14) << "E"
      << std::setw(14) << "F" << std::setw(14) << "G" << std::setw(7) << "iters"
      << std::setw(6) << "conv" << '\n';
  bool ok = rep.g_monotone && rep.g_bounded;
  auto row = [&](const SweepEntry& e) {
    if (!e.error.empty()) {
      ok = false;
      log << std::setw(8) << e.eps << "  error: " << e.error << '\n';
      return;
    }
    log << std::setw(8) << e.eps << std::setprecision(8) << std::setw(16) << e.param_or_norm_u
        << std::setw(14) << e.E << std::setw(14) << e.F << std::setw(14) << e.G
        << std::setw(7) << e.iterations << std::setw(6) << (e.converged ? "yes" : "no")
        << '\n';
  };
  for (const auto& e : rep.entries) row(e);
  if (rep.reference.error.empty()) {
    row(rep.reference);
  } else {
    log << "       0  reference unavailable: " << rep.reference.error << '\n';
  }
  if (!rep.g_monotone) log << "FAILED: G does not decrease with eps\n";
  if (!rep.g_bounded) log << "FAILED: G/eps exceeds 2 max E\n";
  return ok ? kExitOk : kExitFailure;
}

GradcheckResult gradient_check(const TargetFunctional& F, const PenaltySpec& spec,
                               const ControlSpace& space, const TimeGrid& grid, double eps,
                               int points, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.1);
  const int n = grid.intervals();
  const int d = spec.dim();
  const Vec lo = space.lower(grid);
  const Vec hi = space.upper(grid);
  GradcheckResult res;
  int attempts = 0;
  while (res.points < points) {
    if (++attempts > 100 * points) throw SolverError("gradcheck: no feasible sample point found");
    Vec c(lo.size());
    for (long i = 0; i < c.size(); ++i) {
      c(i) = std::uniform_real_distribution<double>(lo(i), hi(i))(rng);
    }
    Control u = space.realize(grid, c);
    Trajectory base = constraint_state(spec, u);
    Mat nodes = base.nodes();
    for (int k = 1; k <= n; ++k) {
      for (int j = 0; j < d; ++j) nodes(k, j) += noise(rng);
    }
    const Trajectory y(grid, nodes);
    std::optional<Control> w;
    if (spec.needs_auxiliary()) {
      Mat wv = rate_auxiliary(*spec.rate, y).values();
      for (int k = 0; k < n; ++k) {
        for (int j = 0; j < d; ++j) wv(k, j) += noise(rng);
      }
      w = Control(grid, wv);
    }
    const Vec* params = space.is_param() ? &c : nullptr;
    const Control* wp = w ? &*w : nullptr;
    auto energy = [&](const Control& uu, const Trajectory& yy, const Control* ww,
                      const Vec* pp) {
      const GValue g = eval_G(spec, uu, yy, ww);
      return eval_F(F, uu, yy, pp) + g.total / eps;
    };
    if (!std::isfinite(energy(u, y, wp, params))) {
      ++res.resamples;
      continue;
    }
    const EGradient ge = grad_E(F, spec, eps, u, y, wp, params);

    std::vector<double> analytic, numeric;
    auto central = [&](auto&& eval_at) {
      const double h = 1e-5;
      return (eval_at(h) - eval_at(-h)) / (2.0 * h);
    };
    bool finite = true;
    for (int k = 1; k <= n && finite; ++k) {
      for (int j = 0; j < d; ++j) {
        const double fd = central([&](double h) {
          Mat m = y.nodes();
          m(k, j) += h;
          return energy(u, Trajectory(grid, m), wp, params);
        });
        if (!std::isfinite(fd)) {
          finite = false;
          break;
        }
        analytic.push_back(ge.dy(k - 1, j));
        numeric.push_back(fd);
      }
    }
    if (space.is_param()) {
      const Mat b = space.basis_matrix(grid);
      for (long p = 0; p < c.size() && finite; ++p) {
        double a = ge.dparams.size() ? ge.dparams(p) : 0.0;
        for (int k = 0; k < n; ++k) {
          for (int j = 0; j < d; ++j) a += b(k * d + j, p) * ge.du(k, j);
        }
        const double fd = central([&](double h) {
          Vec cc = c;
          cc(p) += h;
          return energy(space.realize(grid, cc), y, wp, &cc);
        });
        finite = std::isfinite(fd);
        analytic.push_back(a);
        numeric.push_back(fd);
      }
    } else {
      for (int k = 0; k < n && finite; ++k) {
        for (int j = 0; j < d; ++j) {
          const double fd = central([&](double h) {
            Mat m = u.values();
            m(k, j) += h;
            return energy(Control(grid, m), y, wp, nullptr);
          });
          finite = finite && std::isfinite(fd);
          analytic.push_back(ge.du(k, j));
          numeric.push_back(fd);
        }
      }
    }
    if (w) {
      for (int k = 0; k < n && finite; ++k) {
        for (int j = 0; j < d; ++j) {
          const double fd = central([&](double h) {
            Mat m = w->values();
            m(k, j) += h;
            const Control ww(grid, m);
            return energy(u, y, &ww, params);
          });
          finite = finite && std::isfinite(fd);
          analytic.push_back(ge.dw(k, j));
          numeric.push_back(fd);
        }
      }
    }
    if (!finite) {
      ++res.resamples;
      continue;
    }
    double diff = 0.0, scale = 1.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
      scale = std::max(scale, std::abs(numeric[i]));
    }
    res.max_error = std::max(res.max_error, diff / scale);
    ++res.points;
  }
  return res;
}

int cmd_gradcheck(const std::string& config_path, const CliOptions& opts, std::ostream& log) {
  RunConfig cfg;
  try {
    cfg = load_config(config_path);
  } catch (const ConfigError& e) {
    log << config_path << ": " << e.what() << '\n';
    return kExitUsage;
  }
  const Problem& pb = cfg.problem;
  const TimeGrid grid(pb.horizon, pb.intervals);
  try {
    const GradcheckResult r =
        gradient_check(pb.F, pb.spec, pb.space, grid, cfg.eps.back(), 10, opts.seed);
    const bool ok = r.max_error <= 1e-5;
    log << "gradcheck " << to_string(pb.spec.kind) << " N=" << pb.intervals
        << " eps=" << cfg.eps.back() << ": max relative error " << std::scientific
        << std::setprecision(3) << r.max_error << std::defaultfloat << " over " << r.points
        << " points (" << r.resamples << " resampled) " << (ok ? "PASS" : "FAIL") << '\n';
    return ok ? kExitOk : kExitFailure;
  } catch (const DomainError& e) {
    log << "gradcheck: " << e.what() << '\n';
    return kExitUsage;
  }
}

int cmd_generic_demo(const DemoParams& params, const CliOptions& opts, std::ostream& log) {
  std::shared_ptr<const Oscillator> sys;
  try {
    if (!(params.horizon > 0.0) || params.intervals < 1) {
      throw std::invalid_argument("T must be positive and N >= 1");
    }
    sys = build_oscillator(params.oscillator);
  } catch (const std::invalid_argument& e) {
    log << "generic-demo: " << e.what() << '\n';
    return kExitUsage;
  }
  const TimeGrid grid(params.horizon, params.intervals);
  Vec y0(3);
  y0 << 1.0, 0.0, 1.0;
  const Control u = Control::constant(grid, Vec::Zero(3));
  std::optional<Trajectory> solved;
  try {
    solved = integrate_generic(*sys, y0, u);
  } catch (const DomainError& e) {
    log << "generic-demo: " << e.what() << '\n';
    return kExitFailure;
  }
  const Trajectory& y = *solved;
  const ConservationReport rep = conservation_report(*sys, y);
  {
    auto os = open_out(opts.out, "generic_trajectory.csv");
    os << "t,q,p,theta,E,entropy\n";
    for (int k = 0; k <= grid.intervals(); ++k) {
      const Vec yk = y.node(k);
      os << format_double(grid.time(k)) << ',' << format_double(yk(0)) << ','
         << format_double(yk(1)) << ',' << format_double(yk(2)) << ','
         << format_double(sys->energy(yk)) << ',' << format_double(-sys->potential().value(yk))
         << '\n';
    }
  }
  {
    auto os = open_out(opts.out, "generic_summary.csv");
    os << "max_energy_drift,min_entropy_rate\n"
       << format_double(rep.max_energy_drift) << ',' << format_double(rep.min_entropy_rate)
       << '\n';
  }
  log << "max_energy_drift,min_entropy_rate\n"
      << format_double(rep.max_energy_drift) << ',' << format_double(rep.min_entropy_rate)
      << '\n';
  const bool ok = rep.max_energy_drift <= 1e-6 && rep.min_entropy_rate >= -1e-10;
  return ok ? kExitOk : kExitFailure;
}

}  // namespace varpen
