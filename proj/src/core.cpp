#include "varpen/core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

namespace varpen {

TimeGrid::TimeGrid(double horizon, int intervals)
    : horizon_(horizon), intervals_(intervals), dt_(0.0) {
  if (intervals < 1) {
    throw std::invalid_argument("TimeGrid: need at least one interval");
  }
  if (!(horizon > 0.0) || !std::isfinite(horizon)) {
    throw std::invalid_argument("TimeGrid: horizon must be positive and finite");
  }
  dt_ = horizon / intervals;
}

double TimeGrid::time(int k) const {
  if (k == intervals_) return horizon_;
  return k * dt_;
}

namespace {

void require_finite(const Mat& m, const char* what) {
  if (!m.allFinite()) {
    throw std::invalid_argument(std::string(what) + ": non-finite entry");
  }
}

}  // namespace

Trajectory::Trajectory(TimeGrid grid, Mat nodes)
    : grid_(grid), nodes_(std::move(nodes)) {
  if (nodes_.rows() != grid_.intervals() + 1) {
    throw std::invalid_argument("Trajectory: node count must equal N+1");
  }
  if (nodes_.cols() < 1) {
    throw std::invalid_argument("Trajectory: dimension must be positive");
  }
  require_finite(nodes_, "Trajectory");
}

Control::Control(TimeGrid grid, Mat values)
    : grid_(grid), values_(std::move(values)) {
  if (values_.rows() != grid_.intervals()) {
    throw std::invalid_argument("Control: value count must equal N");
  }
  if (values_.cols() < 1) {
    throw std::invalid_argument("Control: dimension must be positive");
  }
  require_finite(values_, "Control");
}

Control Control::constant(const TimeGrid& grid, const Vec& value) {
  Mat values(grid.intervals(), value.size());
  for (int k = 0; k < grid.intervals(); ++k) values.row(k) = value.transpose();
  return Control(grid, std::move(values));
}

std::vector<IntervalSample> time_samples(const TimeGrid& grid) {
  std::vector<IntervalSample> out(grid.intervals());
  for (int k = 0; k < grid.intervals(); ++k) {
    out[k].index = k;
    out[k].t_mid = grid.midpoint(k);
  }
  return out;
}

std::vector<IntervalSample> interval_samples(const Trajectory& y) {
  const TimeGrid& g = y.grid();
  std::vector<IntervalSample> out(g.intervals());
  for (int k = 0; k < g.intervals(); ++k) {
    IntervalSample& s = out[k];
    s.index = k;
    s.t_mid = g.midpoint(k);
    const Vec a = y.node(k);
    const Vec b = y.node(k + 1);
    s.y_mid = 0.5 * (a + b);
    s.slope = (b - a) / g.dt();
  }
  return out;
}

std::vector<IntervalSample> interval_samples(const Trajectory& y,
                                             const Control& u) {
  if (!(y.grid() == u.grid())) {
    throw std::invalid_argument("interval_samples: grid mismatch");
  }
  auto out = interval_samples(y);
  for (int k = 0; k < y.grid().intervals(); ++k) out[k].u = u.value(k);
  return out;
}

double quad_intervals(const TimeGrid& grid,
                      const std::vector<IntervalSample>& samples,
                      const IntervalIntegrand& integrand) {
  if (static_cast<int>(samples.size()) != grid.intervals()) {
    throw std::invalid_argument("quad_intervals: sample count must equal N");
  }
  double sum = 0.0;
  for (const auto& s : samples) {
    const double v = integrand(s);
    if (!std::isfinite(v)) {
      throw EvaluationError("non-finite integrand on interval " +
                            std::to_string(s.index));
    }
    sum += v;
  }
  return grid.dt() * sum;
}

double quad_intervals(const TimeGrid& grid, const IntervalIntegrand& integrand) {
  return quad_intervals(grid, time_samples(grid), integrand);
}

double quad_intervals(const Trajectory& y, const Control& u,
                      const IntervalIntegrand& integrand) {
  return quad_intervals(y.grid(), interval_samples(y, u), integrand);
}

Vec slope(const Trajectory& y, int k) {
  if (k < 0 || k >= y.grid().intervals()) {
    throw std::out_of_range("slope: interval index " + std::to_string(k) +
                            " out of range");
  }
  return (y.node(k + 1) - y.node(k)) / y.grid().dt();
}

Trajectory sample_function(const TimeGrid& grid, const VecTimeFunction& f) {
  const Vec first = f(grid.time(0));
  Mat nodes(grid.intervals() + 1, first.size());
  nodes.row(0) = first.transpose();
  for (int k = 1; k <= grid.intervals(); ++k) {
    nodes.row(k) = f(grid.time(k)).transpose();
  }
  return Trajectory(grid, std::move(nodes));
}

Trajectory sample_function(const TimeGrid& grid, const TimeFunction& f) {
  return sample_function(grid, [&](double t) { return Vec::Constant(1, f(t)); });
}

Control sample_control(const TimeGrid& grid, const VecTimeFunction& f) {
  const Vec first = f(grid.midpoint(0));
  Mat values(grid.intervals(), first.size());
  values.row(0) = first.transpose();
  for (int k = 1; k < grid.intervals(); ++k) {
    values.row(k) = f(grid.midpoint(k)).transpose();
  }
  return Control(grid, std::move(values));
}

Control sample_control(const TimeGrid& grid, const TimeFunction& f) {
  return sample_control(grid, [&](double t) { return Vec::Constant(1, f(t)); });
}

std::string format_double(double value) {
  std::ostringstream os;
  os << std::setprecision(17) << value;
  return os.str();
}

namespace {

void write_rows(std::ostream& os, const std::string& time_col,
                const std::string& prefix, const Mat& rows,
                const std::function<double(int)>& time) {
  os << time_col;
  for (int j = 0; j < rows.cols(); ++j) os << ',' << prefix << (j + 1);
  os << '\n';
  for (int k = 0; k < rows.rows(); ++k) {
    os << format_double(time(k));
    for (int j = 0; j < rows.cols(); ++j) os << ',' << format_double(rows(k, j));
    os << '\n';
  }
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path + " for writing");
  return f;
}

}  // namespace

void write_csv(std::ostream& os, const Trajectory& y) {
  const TimeGrid& g = y.grid();
  write_rows(os, "t", "y", y.nodes(), [&](int k) { return g.time(k); });
}

void write_csv(std::ostream& os, const Control& u) {
  const TimeGrid& g = u.grid();
  write_rows(os, "t_mid", "u", u.values(), [&](int k) { return g.midpoint(k); });
}

void write_csv_file(const std::string& path, const Trajectory& y) {
  auto f = open_out(path);
  write_csv(f, y);
}

void write_csv_file(const std::string& path, const Control& u) {
  auto f = open_out(path);
  write_csv(f, u);
}

Trajectory read_trajectory_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw Error("trajectory csv: empty input");
  const long dim = std::count(line.begin(), line.end(), ',');
  if (dim < 1 || line.rfind("t,", 0) != 0) {
    throw Error("trajectory csv: bad header '" + line + "'");
  }
  std::vector<double> times;
  std::vector<double> values;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    int col = 0;
    while (std::getline(row, cell, ',')) {
      const double v = std::stod(cell);
      if (col == 0) {
        times.push_back(v);
      } else {
        values.push_back(v);
      }
      ++col;
    }
    if (col != dim + 1) throw Error("trajectory csv: ragged row '" + line + "'");
  }
  if (times.size() < 2) throw Error("trajectory csv: need at least two nodes");
  const int n = static_cast<int>(times.size()) - 1;
  Mat nodes(n + 1, dim);
  for (int k = 0; k <= n; ++k) {
    for (int j = 0; j < dim; ++j) nodes(k, j) = values[k * dim + j];
  }
  return Trajectory(TimeGrid(times.back(), n), std::move(nodes));
}

}  // namespace varpen
