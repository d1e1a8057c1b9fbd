#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "varpen/generic.hpp"
#include "varpen/optimize.hpp"

namespace varpen {

enum ExitCode { kExitOk = 0, kExitFailure = 1, kExitUsage = 2 };

struct CliOptions {
  std::string out = "out";
  std::uint64_t seed = 1;
  int jobs = 1;
};

struct MinimizerRow {
  double eps = 0.0;
  double argmin = 0.0;
  double min = 0.0;
};

struct FigureResult {
  std::string figure;
  std::vector<std::vector<CurvePoint>> curves;  // one per eps, eps = 0 last
  std::vector<MinimizerRow> minimizers;         // decreasing eps, eps = 0 last
  std::vector<std::string> failures;            // failed thresholds, by name

  bool ok() const { return failures.empty(); }
};

// Curves and minimizers of the two example problems, with thresholds checked.
// with_curves = false skips the curve tabulation.
FigureResult reproduce_fig1(int jobs = 1, bool with_curves = true);
FigureResult reproduce_fig2(int jobs = 1, bool with_curves = true);

// Writes curve_eps<eps>.csv and minimizers.csv into dir.
void write_figure(const FigureResult& result, const std::string& dir);

int cmd_reproduce(const std::string& figure, const CliOptions& opts, std::ostream& log);
int cmd_sweep(const std::string& config_path, const CliOptions& opts, std::ostream& log);
int cmd_gradcheck(const std::string& config_path, const CliOptions& opts, std::ostream& log);

struct DemoParams {
  OscillatorParams oscillator;
  double horizon = 1.0;
  int intervals = 800;
};
int cmd_generic_demo(const DemoParams& params, const CliOptions& opts, std::ostream& log);

// Largest mixed relative error |g - g_fd|_inf / max(1, |g_fd|_inf) of grad_E
// over `points` random feasible points; throws on unsupported kinds.
struct GradcheckResult {
  double max_error = 0.0;
  int points = 0;
  int resamples = 0;
};
GradcheckResult gradient_check(const TargetFunctional& F, const PenaltySpec& spec,
                               const ControlSpace& space, const TimeGrid& grid, double eps,
                               int points, std::uint64_t seed);

}  // namespace varpen
