#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "varpen/core.hpp"
#include "varpen/functionals.hpp"
#include "varpen/solvers.hpp"

namespace varpen {

// Admissible controls: either u(t) = sum_i p_i b_i(t) with p in a box, or
// free piecewise-constant values in a per-node box.
class ControlSpace {
 public:
  static ControlSpace param_family(std::vector<VecTimeFunction> basis, Vec lower,
                                   Vec upper, std::string label = "param");
  // u(t) = p e^{-t}, p in [lo, hi]
  static ControlSpace exponential_decay(double lo = 0.0, double hi = 1.0);
  // u(t) = p in R^d, p in [lo, hi]^d
  static ControlSpace constant(int dim = 1, double lo = -10.0, double hi = 10.0);
  static ControlSpace free_nodal(int dim, double lo, double hi);

  bool is_param() const { return !basis_.empty(); }
  int dim() const { return dim_; }
  int param_count() const { return static_cast<int>(basis_.size()); }
  const std::string& label() const { return label_; }

  // Number of control unknowns on a grid (P, or N d).
  int unknowns(const TimeGrid& grid) const;
  Vec lower(const TimeGrid& grid) const;
  Vec upper(const TimeGrid& grid) const;
  Vec center(const TimeGrid& grid) const;
  Vec project(const TimeGrid& grid, const Vec& c) const;

  Control realize(const TimeGrid& grid, const Vec& c) const;
  // Nodal control -> unknown vector (FreeNodal only).
  Vec unknowns_of(const Control& u) const;
  // (N d) x P matrix B with u_k(j) = sum_p B(k d + j, p) c_p (param families).
  Mat basis_matrix(const TimeGrid& grid) const;

 private:
  ControlSpace() = default;
  int dim_ = 1;
  std::vector<VecTimeFunction> basis_;
  Vec lo_;
  Vec hi_;
  double nodal_lo_ = 0.0;
  double nodal_hi_ = 0.0;
  std::string label_;
};

enum class StepPolicy { Newton, LBFGS, Spectral };

struct StartPoint {
  Vec control;                 // unknowns of the control space
  std::optional<Trajectory> y;
  std::optional<Control> w;
};

struct MinimizeOptions {
  int max_iterations = 500;
  double gtol = 1e-8;          // stop when |projected gradient|_inf <= gtol (1 + |E|)
  StepPolicy policy = StepPolicy::Newton;
  int lbfgs_memory = 10;
  bool alternate = false;      // minimize_penalized dispatches to alternate_minimize_ben
  bool optimize_control = true;
  bool optimize_state = true;
  int multistart = 5;          // cold starts only: box center + (multistart - 1) random
  std::uint64_t seed = 1;
  double objective_scale = 1.0;
  std::optional<StartPoint> start;
};

struct MinimizeReport {
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  double E = 0.0;
  double F = 0.0;
  double G = 0.0;
  double projected_gradient = 0.0;
  std::vector<double> history;  // E after every accepted step (half-step)
  std::string message;
};

struct MinimizeResult {
  Vec control;  // unknowns of the control space
  Control u;
  Trajectory y;
  std::optional<Control> w;
  GValue g;
  MinimizeReport report;
};

MinimizeResult minimize_penalized(const TargetFunctional& F, const PenaltySpec& spec,
                                  double eps, const ControlSpace& space,
                                  const TimeGrid& grid, const MinimizeOptions& opts = {});

// Alternates exact y-minimization and u-minimization (BEN, BEN_AUG).
MinimizeResult alternate_minimize_ben(const TargetFunctional& F,
                                      const PenaltySpec& spec, double eps,
                                      const ControlSpace& space, const TimeGrid& grid,
                                      const MinimizeOptions& opts = {});

// E_eps(u, y) with y (and w) minimized for fixed control unknowns c.
MinimizeResult minimize_state(const TargetFunctional& F, const PenaltySpec& spec,
                              double eps, const ControlSpace& space,
                              const TimeGrid& grid, const Vec& c,
                              const MinimizeOptions& opts = {});

// The unique state of the constraint for control u: the discrete solution
// matching spec.kind (Midpoint scheme for smooth potentials, minimizing
// movements for rate kinds, RK4 for GENERIC).
Trajectory constraint_state(const PenaltySpec& spec, const Control& u,
                            Scheme scheme = Scheme::Midpoint);

struct ReferenceOptions {
  int intervals = 3200;
  Scheme scheme = Scheme::Midpoint;
  double param_tol = 1e-9;
  int scan_points = 41;
};

struct ReferenceResult {
  Vec params;
  Trajectory y;
  double F = 0.0;
  int evaluations = 0;
};

// min F(u, S(u)) over a parameter family with at most 4 parameters.
ReferenceResult solve_reference(const TargetFunctional& F, const PenaltySpec& spec,
                                const ControlSpace& space, double horizon,
                                const ReferenceOptions& opts = {});

struct SweepEntry {
  double eps = 0.0;
  Vec control;
  std::optional<Control> u;
  std::optional<Trajectory> y;
  double param_or_norm_u = 0.0;
  double E = 0.0;
  double F = 0.0;
  double G = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string error;
};

struct SweepOptions {
  bool warm_start = true;
  ReferenceOptions reference;
  int jobs = 1;  // only used without warm starting
};

struct SweepReport {
  std::vector<SweepEntry> entries;  // decreasing eps
  SweepEntry reference;             // eps = 0
  bool g_monotone = true;           // G decreasing in eps within 10 %
  bool g_bounded = true;            // G / eps <= 2 max E

  static std::string csv_header();
  void write_csv(std::ostream& os) const;
};

SweepReport epsilon_sweep(const TargetFunctional& F, const PenaltySpec& spec,
                          const ControlSpace& space, const TimeGrid& grid,
                          const std::vector<double>& eps_list,
                          const MinimizeOptions& opts = {},
                          const SweepOptions& sweep = {});

// Norm used in sweep reports for non-scalar controls: (sum_k dt |u_k|^2)^{1/2}.
double control_norm(const Control& u);

struct CurvePoint {
  double eps = 0.0;
  double param = 0.0;
  double E = 0.0;
};

// u-parameter -> min_y E_eps for a one-parameter space on `points` equally
// spaced values of the box; eps = 0 tabulates F(u, S(u)).
std::vector<CurvePoint> energy_curve(const TargetFunctional& F, const PenaltySpec& spec,
                                     double eps, const ControlSpace& space,
                                     const TimeGrid& grid, int points = 201,
                                     int jobs = 1);

void write_curve_csv(std::ostream& os, const std::vector<CurvePoint>& curve);

}  // namespace varpen
