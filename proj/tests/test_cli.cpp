#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "varpen/cli.hpp"
#include "varpen/config.hpp"

using namespace varpen;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(path / name) << text;
    return (path / name).string();
  }
  std::string read(const std::string& name) const {
    std::ifstream in(path / name);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }
};

}  // namespace

TEST_CASE("config parsing") {
  SUBCASE("defaults give the linear example") {
    const RunConfig c = parse_config("");
    CHECK(c.problem.name == "linear");
    CHECK(c.problem.spec.kind == PenaltyKind::BEN);
    CHECK(c.eps == std::vector<double>{2.0, 1.0, 0.5, 0.1});
  }
  SUBCASE("full config") {
    const RunConfig c = parse_config(R"(
# quartic problem with DG
[problem]
preset = quartic
kind = dg
N = 50
[control]
lower = 0
upper = 2.5
[sweep]
eps = 1, 0.5   # trailing comment
[minimize]
policy = lbfgs
gtol = 1e-7
[run]
seed = 42
)");
    CHECK(c.problem.spec.kind == PenaltyKind::DG);
    CHECK(c.problem.intervals == 50);
    CHECK(c.problem.space.upper(TimeGrid(1.0, 50))(0) == 2.5);
    CHECK(c.eps.size() == 2);
    CHECK(c.minimize.policy == StepPolicy::LBFGS);
    CHECK(c.minimize.gtol == 1e-7);
    CHECK(c.seed == 42);
  }
  SUBCASE("potentials and rates by name") {
    CHECK(parse_potential("quadratic(2.0)")->value(Vec::Constant(1, 1.0)) == doctest::Approx(1.0));
    CHECK(parse_potential("quartic")->value(Vec::Constant(1, 2.0)) == doctest::Approx(4.0));
    CHECK(parse_potential("power(p=3, c=2)")->value(Vec::Constant(1, 1.0)) == doctest::Approx(2.0 / 3.0));
    CHECK(parse_rate("power(p=2, beta=1.0)")->value(Vec::Zero(1), Vec::Constant(1, 2.0)) == doctest::Approx(2.0));
    CHECK(parse_time_function("2*exp(-1)")(1.0) == doctest::Approx(2.0 / std::exp(1.0)));
    CHECK(parse_time_function("pow(2)")(0.5) == doctest::Approx(0.25));
    CHECK_THROWS_AS(parse_potential("cubic"), ConfigError);
  }
  SUBCASE("errors carry line numbers") {
    auto message = [](const std::string& text) {
      try {
        parse_config(text);
      } catch (const ConfigError& e) {
        return std::string(e.what());
      }
      return std::string("no error");
    };
    CHECK(message("[problem]\nkind = ben\nbogus = 1\n").rfind("line 3:", 0) == 0);
    CHECK(message("[sweep]\n\neps = 1, 2\n").rfind("line 3:", 0) == 0);
    CHECK(message("[sweep]\neps =\n").rfind("line 2:", 0) == 0);
    CHECK(message("[nowhere]\n").rfind("line 1:", 0) == 0);
    CHECK(message("key = 1\n").rfind("line 1:", 0) == 0);
    CHECK(message("[problem]\nN = 0\n").rfind("line 2:", 0) == 0);
    CHECK(message("[problem]\nkind = dg_generic\n").rfind("line 2:", 0) == 0);
  }
}

TEST_CASE("gradcheck command") {
  TempDir dir("varpen_gradcheck");
  CliOptions o;
  o.out = dir.path.string();
  std::ostringstream log;
  CHECK(cmd_gradcheck(dir.write("ben.cfg", "[problem]\nkind = BEN\nN = 20\n"), o, log) == kExitOk);
  CHECK(cmd_gradcheck(dir.write("dg.cfg", "[problem]\npreset = quartic\nN = 20\n"), o, log) == kExitOk);
  CHECK(cmd_gradcheck(dir.write("n1.cfg", "[problem]\nkind = DG_RATE\nN = 1\n"), o, log) == kExitOk);
  CHECK(cmd_gradcheck(dir.write("bad.cfg", "[problem]\nN = x\n"), o, log) == kExitUsage);
  CHECK(cmd_gradcheck((dir.path / "missing.cfg").string(), o, log) == kExitUsage);
}

TEST_CASE("sweep command") {
  TempDir dir("varpen_sweep");
  CliOptions o;
  o.out = dir.path.string();
  std::ostringstream log;
  CHECK(cmd_sweep(dir.write("empty.cfg", "[sweep]\neps = \n"), o, log) == kExitUsage);
  const std::string cfg = dir.write("lin.cfg", "[problem]\nN = 100\n[sweep]\neps = 1, 0.1\nreference_N = 400\n");
  CHECK(cmd_sweep(cfg, o, log) == kExitOk);
  const std::string first = dir.read("sweep.csv");
  CHECK(first.rfind("eps,param_or_norm_u,E,F,G,iters,converged\n", 0) == 0);
  CHECK(fs::exists(dir.path / "trajectory_eps0.1.csv"));
  CHECK(fs::exists(dir.path / "trajectory_eps0.csv"));
  // bit-reproducible
  CHECK(cmd_sweep(cfg, o, log) == kExitOk);
  CHECK(dir.read("sweep.csv") == first);
}

TEST_CASE("BEN reaches a given accuracy at larger eps than DG when lambda < 1") {
  // on quadratic potentials G_DG = lambda G_BEN, so for lambda < 1 the BEN
  // penalty is the stronger one at equal eps
  const double lambda = 0.5;
  const TimeGrid g(1.0, 200);
  const Problem base = linear_problem(PenaltyKind::BEN, lambda, 200);
  const double u_ref = solve_reference(base.F, base.spec, base.space, 1.0).params(0);
  auto gap = [&](PenaltyKind kind, double eps) {
    const Problem pb = linear_problem(kind, lambda, 200);
    return std::abs(minimize_penalized(pb.F, pb.spec, eps, pb.space, g).control(0) - u_ref);
  };
  const std::vector<double> eps_list{2.0, 1.0, 0.5, 0.2, 0.1, 0.05, 0.02, 0.01};
  auto threshold_eps = [&](PenaltyKind kind, double tol) {
    for (double eps : eps_list) {
      if (gap(kind, eps) <= tol) return eps;
    }
    return 0.0;
  };
  for (double eps : {1.0, 0.1}) CHECK(gap(PenaltyKind::BEN, eps) < gap(PenaltyKind::DG, eps));
  const double tol = 0.5 * (gap(PenaltyKind::BEN, 0.2) + gap(PenaltyKind::BEN, 0.1));
  CHECK(threshold_eps(PenaltyKind::BEN, tol) > threshold_eps(PenaltyKind::DG, tol));
}

TEST_CASE("generic-demo command") {
  TempDir dir("varpen_demo");
  CliOptions o;
  o.out = dir.path.string();
  std::ostringstream log;
  CHECK(cmd_generic_demo({}, o, log) == kExitOk);
  const std::string traj = dir.read("generic_trajectory.csv");
  CHECK(traj.rfind("t,q,p,theta,E,entropy\n", 0) == 0);
  CHECK(dir.read("generic_summary.csv").rfind("max_energy_drift,min_entropy_rate\n", 0) == 0);

  DemoParams nu0;
  nu0.oscillator.nu = 0.0;
  CHECK(cmd_generic_demo(nu0, o, log) == kExitOk);

  DemoParams bad;
  bad.oscillator.kappa = 0.0;
  CHECK(cmd_generic_demo(bad, o, log) == kExitUsage);
}

TEST_CASE("reproduce fig1") {
  TempDir dir("varpen_fig1");
  CliOptions o;
  o.out = dir.path.string();
  std::ostringstream log;
  CHECK(cmd_reproduce("fig1", o, log) == kExitOk);
  for (const char* f : {"curve_eps2.csv", "curve_eps1.csv", "curve_eps0.5.csv", "curve_eps0.1.csv",
                        "curve_eps0.csv", "minimizers.csv"}) {
    CHECK(fs::exists(dir.path / f));
  }
  CHECK(dir.read("curve_eps1.csv").rfind("eps,u_param,E\n", 0) == 0);
  CHECK(cmd_reproduce("fig3", o, log) == kExitUsage);
}
