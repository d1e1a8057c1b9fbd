#pragma once

#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace varpen {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Error hierarchy shared by every module.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A functional or integrand produced a non-finite value.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

// An argument lies outside the effective domain of a potential or system.
class DomainError : public Error {
 public:
  using Error::Error;
};

// An iterative solver failed to converge.
class SolverError : public Error {
 public:
  using Error::Error;
};

// Uniform partition of [0, T] into N intervals.
class TimeGrid {
 public:
  TimeGrid(double horizon, int intervals);

  double horizon() const { return horizon_; }
  int intervals() const { return intervals_; }
  double dt() const { return dt_; }

  // t_k = k * dt; t_N is returned as T exactly.
  double time(int k) const;
  double midpoint(int k) const { return (k + 0.5) * dt_; }

  bool operator==(const TimeGrid& other) const {
    return horizon_ == other.horizon_ && intervals_ == other.intervals_;
  }

 private:
  double horizon_;
  int intervals_;
  double dt_;
};

// Nodal values y_0..y_N in R^d, interpreted piecewise linearly in time.
class Trajectory {
 public:
  // nodes: (N+1) x d
  Trajectory(TimeGrid grid, Mat nodes);

  const TimeGrid& grid() const { return grid_; }
  int dim() const { return static_cast<int>(nodes_.cols()); }
  int node_count() const { return static_cast<int>(nodes_.rows()); }
  const Mat& nodes() const { return nodes_; }
  Vec node(int k) const { return nodes_.row(k).transpose(); }
  Vec initial() const { return node(0); }
  Vec terminal() const { return node(node_count() - 1); }

 private:
  TimeGrid grid_;
  Mat nodes_;
};

// Controls u_k on (t_k, t_{k+1}), piecewise constant.
class Control {
 public:
  // values: N x d
  Control(TimeGrid grid, Mat values);

  static Control constant(const TimeGrid& grid, const Vec& value);

  const TimeGrid& grid() const { return grid_; }
  int dim() const { return static_cast<int>(values_.cols()); }
  const Mat& values() const { return values_; }
  Vec value(int k) const { return values_.row(k).transpose(); }

 private:
  TimeGrid grid_;
  Mat values_;
};

// Discrete carrier of (y, y', u) on one interval.
struct IntervalSample {
  int index = 0;
  double t_mid = 0.0;
  Vec y_mid;
  Vec slope;
  Vec u;
};

using IntervalIntegrand = std::function<double(const IntervalSample&)>;

// Samples carrying only the index and midpoint time.
std::vector<IntervalSample> time_samples(const TimeGrid& grid);
// Samples of a trajectory; u is left empty.
std::vector<IntervalSample> interval_samples(const Trajectory& y);
// Samples of a (trajectory, control) pair on the same grid.
std::vector<IntervalSample> interval_samples(const Trajectory& y,
                                             const Control& u);

// Midpoint rule: sum_k dt * f(sample_k). Throws EvaluationError naming the
// interval on a non-finite integrand value.
double quad_intervals(const TimeGrid& grid,
                      const std::vector<IntervalSample>& samples,
                      const IntervalIntegrand& integrand);
double quad_intervals(const TimeGrid& grid, const IntervalIntegrand& integrand);
double quad_intervals(const Trajectory& y, const Control& u,
                      const IntervalIntegrand& integrand);

// (y_{k+1} - y_k) / dt.
Vec slope(const Trajectory& y, int k);

using TimeFunction = std::function<double(double)>;
using VecTimeFunction = std::function<Vec(double)>;

// nodes[k] = f(t_k)
Trajectory sample_function(const TimeGrid& grid, const VecTimeFunction& f);
Trajectory sample_function(const TimeGrid& grid, const TimeFunction& f);
// values[k] = f(t_mid_k)
Control sample_control(const TimeGrid& grid, const VecTimeFunction& f);
Control sample_control(const TimeGrid& grid, const TimeFunction& f);

// CSV with header `t,y1..yd` (nodes) or `t_mid,u1..ud` (controls), 17
// significant digits, LF line endings.
void write_csv(std::ostream& os, const Trajectory& y);
void write_csv(std::ostream& os, const Control& u);
void write_csv_file(const std::string& path, const Trajectory& y);
void write_csv_file(const std::string& path, const Control& u);
Trajectory read_trajectory_csv(std::istream& is);

// Shared number formatting for every CSV the project writes.
std::string format_double(double value);

}  // namespace varpen
