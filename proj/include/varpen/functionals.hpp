#pragma once

#include <cmath>
#include <optional>
#include <vector>
#include <string>

#include "varpen/convex.hpp"
#include "varpen/core.hpp"
#include "varpen/generic.hpp"

namespace varpen {

// User-defined extra integrand of F, evaluated on interval samples. The
// gradients are needed only by grad_E.
struct ExtraIntegrand {
  IntervalIntegrand value;
  std::function<Vec(const IntervalSample&)> grad_y;  // w.r.t. y_mid
  std::function<Vec(const IntervalSample&)> grad_u;  // w.r.t. u
};

// F(u, y) = 1/2 int w_y |y - y_ref|^2 + 1/2 int w_dy |y' - dy_ref|^2
//         + 1/2 int w_u |u - u_ref|^2 + int extra + 1/2 w_p |p - p_ref|^2.
// Empty weight functions mean the term is absent; empty references mean 0.
struct TargetFunctional {
  TimeFunction weight_y;
  VecTimeFunction y_ref;
  TimeFunction weight_dy;
  VecTimeFunction dy_ref;
  TimeFunction weight_u;
  VecTimeFunction u_ref;
  double param_weight = 0.0;
  Vec param_ref;
  std::optional<ExtraIntegrand> extra;

  double param_term(const Vec& params) const;
  Vec param_grad(const Vec& params) const;
};

enum class PenaltyKind { BEN, BEN_AUG, BEN_DN, DG, DG_RATE, DG_GENERIC };

std::string to_string(PenaltyKind kind);
PenaltyKind parse_penalty_kind(const std::string& text);

struct PenaltySpec {
  PenaltyKind kind = PenaltyKind::BEN;
  PotentialPtr potential;
  RatePotentialPtr rate;     // BEN_DN, DG_RATE
  GenericSystemPtr system;   // DG_GENERIC
  Vec y0;

  // Throws std::invalid_argument when an ingredient is missing.
  void validate() const;
  int dim() const { return static_cast<int>(y0.size()); }
  bool needs_auxiliary() const { return kind == PenaltyKind::BEN_DN; }
};

// total = integral_main + integral_cross + boundary + positive_part.
//   BEN      main = int phi(y) + phi*(u - y'),  cross = -int <u, y>,
//            boundary = |y_N|^2/2 - |y_0|^2/2
//   BEN_AUG  as BEN, positive_part = augmentation
//   BEN_DN   main = int phi(y) + phi*(u - w) - <u - w, y>, positive_part =
//            (int psi(y') + psi*(w) - <u, y'> + phi(y_N) - phi(y_0))^+
//   DG*      main = int psi + psi*, cross = -int <u, rate>,
//            boundary = phi(y_N) - phi(y_0); for GENERIC the part of the rate
//            outside range K, within tolerance, is paired with dphi instead
struct GValue {
  double total = 0.0;
  double integral_main = 0.0;
  double integral_cross = 0.0;
  double boundary = 0.0;
  double positive_part = 0.0;
  bool feasible = true;  // initial condition satisfied
  // Set when total is +inf.
  std::string infinite_term;
  int infinite_interval = -1;
  double violation = 0.0;

  bool finite() const { return std::isfinite(total); }
  static std::string csv_header();
  std::string csv_row() const;
};

double eval_F(const TargetFunctional& F, const Control& u, const Trajectory& y,
              const Vec* params = nullptr);

GValue eval_G_BEN(const PenaltySpec& spec, const Control& u, const Trajectory& y);
GValue eval_G_BEN_aug(const PenaltySpec& spec, const Control& u,
                      const Trajectory& y);
GValue eval_G_BEN_dn(const PenaltySpec& spec, const Control& u,
                     const Trajectory& y, const Control& w);
GValue eval_G_DG(const PenaltySpec& spec, const Control& u, const Trajectory& y);
GValue eval_G_DG_rate(const PenaltySpec& spec, const Control& u,
                      const Trajectory& y);
GValue eval_G_DG_generic(const PenaltySpec& spec, const Control& u,
                         const Trajectory& y);

// Dispatch on spec.kind; w is required for BEN_DN only.
GValue eval_G(const PenaltySpec& spec, const Control& u, const Trajectory& y,
              const Control* w = nullptr);

// Gradient of the discrete E_eps = F + G / eps. dy has rows for y_1..y_N
// (the pinned y_0 is not an unknown); dw is empty unless BEN_DN.
struct EGradient {
  double value = 0.0;
  Mat dy;
  Mat du;
  Mat dw;
  Vec dparams;  // gradient of F's parameter term, if params were given
};

EGradient grad_E(const TargetFunctional& F, const PenaltySpec& spec, double eps,
                 const Control& u, const Trajectory& y,
                 const Control* w = nullptr, const Vec* params = nullptr);

// Per-interval decomposition shared by the evaluators, the gradient and the
// optimizer's Hessian assembly. Local variables are z = (y_k, y_{k+1}, u_k
// [, w_k]).
struct LocalTerms {
  double f = 0.0;         // dt * F integrand
  double main = 0.0;      // G pieces as in GValue
  double cross = 0.0;
  double boundary = 0.0;  // telescoping share of the boundary term
  double aug = 0.0;       // contribution to the positive-part argument
  std::string infinite_term;
  double violation = 0.0;

  double g() const { return main + cross + boundary; }
};

struct LocalGradient {
  Vec f;    // d f / dz
  Vec g;    // d (main + cross + boundary) / dz
  Vec aug;  // d aug / dz
};

class LocalModel {
 public:
  LocalModel(const TargetFunctional& F, const PenaltySpec& spec, TimeGrid grid);

  const TimeGrid& grid() const { return grid_; }
  int dim() const { return d_; }
  int local_size() const { return spec_.needs_auxiliary() ? 4 * d_ : 3 * d_; }
  bool has_aug() const;

  LocalTerms terms(int k, const Vec& a, const Vec& b, const Vec& u,
                   const Vec& w) const;
  LocalGradient gradient(int k, const Vec& a, const Vec& b, const Vec& u,
                         const Vec& w) const;

  const TargetFunctional& target() const { return F_; }
  const PenaltySpec& spec() const { return spec_; }

 private:
  struct Weights {
    double wy = 0.0, wdy = 0.0, wu = 0.0;
    Vec yref, dyref, uref;
  };

  double generic_tolerance(const Vec& a, const Vec& b) const;

  TargetFunctional F_;
  PenaltySpec spec_;
  TimeGrid grid_;
  int d_;
  std::vector<Weights> weights_;
};

}  // namespace varpen
