#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "varpen/functionals.hpp"
#include "varpen/optimize.hpp"

namespace varpen {

// Parse failure; the message starts with "line N:" when a line is known.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A penalized optimal control problem with its grid.
struct Problem {
  std::string name;
  TargetFunctional F;
  PenaltySpec spec;
  ControlSpace space = ControlSpace::constant();
  double horizon = 1.0;
  int intervals = 400;
};

// min 1/2 int (y - e^{-t})^2 + 1/2 int t^2 (u - e^{-t})^2,
// y' + lambda y = u0 e^{-t}, u0 in [0, 1], y(0) = 1.
Problem linear_problem(PenaltyKind kind = PenaltyKind::BEN, double lambda = 1.0,
                       int intervals = 400);

// min 1/2 int (y - 1)^2 + 1/2 (u - 2)^2, y' + y^3 = u constant, y(0) = 1.
Problem quartic_problem(PenaltyKind kind = PenaltyKind::DG, int intervals = 400,
                        double lo = 0.0, double hi = 3.0);

struct RunConfig {
  Problem problem;
  std::vector<double> eps;
  MinimizeOptions minimize;
  SweepOptions sweep;
  std::uint64_t seed = 1;
};

// key = value lines grouped under [problem], [target], [control], [sweep],
// [minimize]; '#' starts a comment.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

// "quadratic(2)", "quartic", "power(p=3, c=1)", "abs(1)".
PotentialPtr parse_potential(const std::string& text, int dim = 1);
// "power(p=2, beta=1)", "power(p=2, beta0=2, beta1=0.5)".
RatePotentialPtr parse_rate(const std::string& text, int dim = 1);
// "1.5", "exp(-1)" = e^{-t}, "pow(2)" = t^2, "2*exp(-1)".
TimeFunction parse_time_function(const std::string& text);

}  // namespace varpen
