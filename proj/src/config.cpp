#include "varpen/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace varpen {

Problem linear_problem(PenaltyKind kind, double lambda, int intervals) {
  Problem pb{"linear", {}, {}, ControlSpace::exponential_decay(0.0, 1.0), 1.0, intervals};
  auto decay = [](double t) { return Vec::Constant(1, std::exp(-t)); };
  pb.F.weight_y = [](double) { return 1.0; };
  pb.F.y_ref = decay;
  pb.F.weight_u = [](double t) { return t * t; };
  pb.F.u_ref = decay;
  pb.spec.kind = kind;
  pb.spec.potential = make_quadratic(lambda);
  pb.spec.y0 = Vec::Constant(1, 1.0);
  if (kind == PenaltyKind::BEN_DN || kind == PenaltyKind::DG_RATE) {
    pb.spec.rate = make_power_rate(2.0, 1.0);
  }
  return pb;
}

Problem quartic_problem(PenaltyKind kind, int intervals, double lo, double hi) {
  Problem pb{"quartic", {}, {}, ControlSpace::constant(1, lo, hi), 1.0, intervals};
  pb.F.weight_y = [](double) { return 1.0; };
  pb.F.y_ref = [](double) { return Vec::Constant(1, 1.0); };
  pb.F.param_weight = 1.0;
  pb.F.param_ref = Vec::Constant(1, 2.0);
  pb.spec.kind = kind;
  pb.spec.potential = make_quartic();
  pb.spec.y0 = Vec::Constant(1, 1.0);
  if (kind == PenaltyKind::BEN_DN || kind == PenaltyKind::DG_RATE) {
    pb.spec.rate = make_power_rate(2.0, 1.0);
  }
  return pb;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

double to_double(const std::string& s) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw ConfigError("not a number: '" + s + "'");
  }
  if (trim(s.substr(pos)) != "") throw ConfigError("not a number: '" + s + "'");
  return v;
}

int to_int(const std::string& s) {
  const double v = to_double(s);
  if (v != std::floor(v) || std::abs(v) > 1e9) throw ConfigError("not an integer: '" + s + "'");
  return static_cast<int>(v);
}

bool to_bool(const std::string& s) {
  const std::string v = lower(s);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("not a boolean: '" + s + "'");
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

// name(args) -> name, positional and named arguments
struct Call {
  std::string name;
  std::vector<double> positional;
  std::map<std::string, double> named;

  double get(const std::string& key, std::size_t index, double fallback) const {
    if (auto it = named.find(key); it != named.end()) return it->second;
    if (index < positional.size()) return positional[index];
    return fallback;
  }
};

Call parse_call(const std::string& text) {
  Call c;
  const std::string t = trim(text);
  const auto open = t.find('(');
  if (open == std::string::npos) {
    c.name = lower(t);
    return c;
  }
  if (t.back() != ')') throw ConfigError("missing ')' in '" + t + "'");
  c.name = lower(trim(t.substr(0, open)));
  const std::string inner = trim(t.substr(open + 1, t.size() - open - 2));
  if (inner.empty()) return c;
  for (const auto& arg : split(inner, ',')) {
    const auto eq = arg.find('=');
    if (eq == std::string::npos) {
      c.positional.push_back(to_double(arg));
    } else {
      c.named[lower(trim(arg.substr(0, eq)))] = to_double(trim(arg.substr(eq + 1)));
    }
  }
  return c;
}

}  // namespace

PotentialPtr parse_potential(const std::string& text, int dim) {
  const Call c = parse_call(text);
  if (c.name == "quadratic") return make_quadratic(c.get("lambda", 0, 1.0), dim);
  if (c.name == "quartic") return make_quartic(dim);
  if (c.name == "power") {
    return std::make_shared<PowerPotential>(c.get("p", 0, 2.0), c.get("c", 1, 1.0), dim);
  }
  if (c.name == "abs") {
    if (dim != 1) throw ConfigError("abs potential needs dimension 1");
    return std::make_shared<AbsPotential>(c.get("c", 0, 1.0));
  }
  throw ConfigError("unknown potential '" + c.name + "'");
}

RatePotentialPtr parse_rate(const std::string& text, int dim) {
  const Call c = parse_call(text);
  if (c.name != "power") throw ConfigError("unknown rate potential '" + c.name + "'");
  const double p = c.get("p", 0, 2.0);
  if (c.named.count("beta0")) {
    return std::make_shared<PowerRate>(
        p, Modulation::sinusoidal(c.named.at("beta0"), c.get("beta1", 99, 0.0), dim), dim);
  }
  return make_power_rate(p, c.get("beta", 1, 1.0), dim);
}

TimeFunction parse_time_function(const std::string& text) {
  std::string t = trim(text);
  double scale = 1.0;
  if (const auto star = t.find('*'); star != std::string::npos) {
    scale = to_double(trim(t.substr(0, star)));
    t = trim(t.substr(star + 1));
  }
  if (t.find('(') == std::string::npos) {
    const double v = scale * to_double(t);
    return [v](double) { return v; };
  }
  const Call c = parse_call(t);
  if (c.name == "exp") {
    const double a = c.get("a", 0, 1.0);
    return [scale, a](double s) { return scale * std::exp(a * s); };
  }
  if (c.name == "pow") {
    const double p = c.get("p", 0, 1.0);
    return [scale, p](double s) { return scale * std::pow(s, p); };
  }
  throw ConfigError("unknown time function '" + c.name + "'");
}

namespace {

VecTimeFunction as_vector(TimeFunction f, int dim) {
  return [f = std::move(f), dim](double t) { return Vec::Constant(dim, f(t)); };
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split(s, ',')) {
    if (!item.empty()) out.push_back(to_double(item));
  }
  return out;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  using Entries = std::map<std::string, std::pair<std::string, int>>;
  std::map<std::string, Entries> sections;
  std::string section;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  const std::map<std::string, std::vector<std::string>> known = {
      {"problem", {"preset", "kind", "potential", "rate", "y0", "dim", "n", "t", "lambda"}},
      {"target",
       {"weight_y", "y_ref", "weight_dy", "dy_ref", "weight_u", "u_ref", "param_weight",
        "param_ref"}},
      {"control", {"type", "lower", "upper"}},
      {"sweep", {"eps", "warm_start", "reference_n", "param_tol"}},
      {"minimize",
       {"policy", "gtol", "max_iterations", "multistart", "alternate", "lbfgs_memory"}},
      {"run", {"seed"}},
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(lineno) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "malformed section header");
      section = lower(trim(line.substr(1, line.size() - 2)));
      if (!known.count(section)) throw ConfigError(where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    if (section.empty()) throw ConfigError(where + "key outside of a section");
    const std::string key = lower(trim(line.substr(0, eq)));
    const std::string value = trim(line.substr(eq + 1));
    const auto& keys = known.at(section);
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw ConfigError(where + "unknown key '" + key + "' in [" + section + "]");
    }
    if (sections[section].count(key)) throw ConfigError(where + "duplicate key '" + key + "'");
    sections[section][key] = {value, lineno};
  }

  auto get = [&](const std::string& sec, const std::string& key) -> const std::pair<std::string, int>* {
    auto s = sections.find(sec);
    if (s == sections.end()) return nullptr;
    auto k = s->second.find(key);
    return k == s->second.end() ? nullptr : &k->second;
  };
  // runs f(value) and prefixes errors with the line number
  auto with = [&](const std::string& sec, const std::string& key, auto f) {
    if (const auto* e = get(sec, key)) {
      try {
        f(e->first);
      } catch (const ConfigError& err) {
        throw ConfigError("line " + std::to_string(e->second) + ": " + err.what());
      } catch (const std::invalid_argument& err) {
        throw ConfigError("line " + std::to_string(e->second) + ": " + err.what());
      }
    }
  };

  RunConfig cfg;
  std::string preset = "linear";
  with("problem", "preset", [&](const std::string& v) {
    preset = lower(v);
    if (preset != "linear" && preset != "quartic" && preset != "custom") {
      throw ConfigError("unknown preset '" + v + "'");
    }
  });
  PenaltyKind kind = preset == "quartic" ? PenaltyKind::DG : PenaltyKind::BEN;
  with("problem", "kind", [&](const std::string& v) {
    try {
      kind = parse_penalty_kind(v);
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
    if (kind == PenaltyKind::DG_GENERIC) {
      throw ConfigError("GENERIC penalties are not available for optimal control runs");
    }
  });
  int n = 400;
  with("problem", "n", [&](const std::string& v) {
    n = to_int(v);
    if (n < 1) throw ConfigError("N must be >= 1");
  });
  double lambda = 1.0;
  with("problem", "lambda", [&](const std::string& v) { lambda = to_double(v); });

  if (preset == "quartic") {
    cfg.problem = quartic_problem(kind, n);
  } else {
    cfg.problem = linear_problem(kind, lambda, n);
  }
  Problem& pb = cfg.problem;
  if (preset == "custom") {
    pb.name = "custom";
    pb.F = TargetFunctional{};
  }
  int dim = 1;
  with("problem", "dim", [&](const std::string& v) {
    dim = to_int(v);
    if (dim < 1) throw ConfigError("dim must be >= 1");
  });
  if (dim != 1 && preset != "custom") throw ConfigError("presets are one-dimensional");
  with("problem", "t", [&](const std::string& v) {
    pb.horizon = to_double(v);
    if (!(pb.horizon > 0.0)) throw ConfigError("T must be positive");
  });
  with("problem", "potential",
       [&](const std::string& v) { pb.spec.potential = parse_potential(v, dim); });
  with("problem", "rate", [&](const std::string& v) { pb.spec.rate = parse_rate(v, dim); });
  with("problem", "y0", [&](const std::string& v) {
    const auto vals = parse_list(v);
    if (vals.size() == 1) {
      pb.spec.y0 = Vec::Constant(dim, vals[0]);
    } else if (static_cast<int>(vals.size()) == dim) {
      pb.spec.y0 = Eigen::Map<const Vec>(vals.data(), dim);
    } else {
      throw ConfigError("y0 has the wrong length");
    }
  });
  if (pb.spec.y0.size() != dim) pb.spec.y0 = Vec::Constant(dim, pb.spec.y0.size() ? pb.spec.y0(0) : 1.0);
  if ((kind == PenaltyKind::BEN_DN || kind == PenaltyKind::DG_RATE) && !pb.spec.rate) {
    pb.spec.rate = make_power_rate(2.0, 1.0, dim);
  }
  if (preset == "custom" && !pb.spec.potential) {
    throw ConfigError("custom problems need [problem] potential");
  }

  auto weight = [&](const std::string& key, TimeFunction& slot) {
    with("target", key, [&](const std::string& v) { slot = parse_time_function(v); });
  };
  auto reference = [&](const std::string& key, VecTimeFunction& slot) {
    with("target", key, [&](const std::string& v) { slot = as_vector(parse_time_function(v), dim); });
  };
  weight("weight_y", pb.F.weight_y);
  reference("y_ref", pb.F.y_ref);
  weight("weight_dy", pb.F.weight_dy);
  reference("dy_ref", pb.F.dy_ref);
  weight("weight_u", pb.F.weight_u);
  reference("u_ref", pb.F.u_ref);
  with("target", "param_weight", [&](const std::string& v) { pb.F.param_weight = to_double(v); });
  with("target", "param_ref", [&](const std::string& v) {
    const auto vals = parse_list(v);
    pb.F.param_ref = Eigen::Map<const Vec>(vals.data(), static_cast<long>(vals.size()));
  });

  std::string type = preset == "quartic" ? "constant" : (preset == "custom" ? "constant" : "exp_decay");
  with("control", "type", [&](const std::string& v) {
    type = lower(v);
    if (type != "exp_decay" && type != "constant" && type != "free") {
      throw ConfigError("unknown control type '" + v + "'");
    }
  });
  double lo = type == "exp_decay" ? 0.0 : (preset == "quartic" ? 0.0 : -10.0);
  double hi = type == "exp_decay" ? 1.0 : (preset == "quartic" ? 3.0 : 10.0);
  with("control", "lower", [&](const std::string& v) { lo = to_double(v); });
  with("control", "upper", [&](const std::string& v) { hi = to_double(v); });
  if (!(lo <= hi)) throw ConfigError("control box is empty");
  if (type == "exp_decay") {
    if (dim != 1) throw ConfigError("exp_decay controls are scalar");
    pb.space = ControlSpace::exponential_decay(lo, hi);
  } else if (type == "constant") {
    pb.space = ControlSpace::constant(dim, lo, hi);
  } else {
    pb.space = ControlSpace::free_nodal(dim, lo, hi);
  }
  if (pb.F.param_weight != 0.0 && pb.space.is_param() &&
      pb.F.param_ref.size() != 0 && pb.F.param_ref.size() != pb.space.param_count()) {
    throw ConfigError("param_ref length does not match the control parameters");
  }
  pb.intervals = n;

  cfg.eps = preset == "quartic" ? std::vector<double>{1.0, 0.5, 0.1, 0.05}
                                : std::vector<double>{2.0, 1.0, 0.5, 0.1};
  with("sweep", "eps", [&](const std::string& v) {
    cfg.eps = parse_list(v);
    if (cfg.eps.empty()) throw ConfigError("eps list is empty");
    for (std::size_t i = 0; i < cfg.eps.size(); ++i) {
      if (!(cfg.eps[i] > 0.0)) throw ConfigError("eps values must be positive");
      if (i > 0 && !(cfg.eps[i] < cfg.eps[i - 1])) {
        throw ConfigError("eps values must be strictly decreasing");
      }
    }
  });
  with("sweep", "warm_start", [&](const std::string& v) { cfg.sweep.warm_start = to_bool(v); });
  with("sweep", "reference_n", [&](const std::string& v) {
    cfg.sweep.reference.intervals = to_int(v);
    if (cfg.sweep.reference.intervals < 1) throw ConfigError("reference_N must be >= 1");
  });
  with("sweep", "param_tol", [&](const std::string& v) {
    cfg.sweep.reference.param_tol = to_double(v);
  });

  with("minimize", "policy", [&](const std::string& v) {
    const std::string p = lower(v);
    if (p == "newton") cfg.minimize.policy = StepPolicy::Newton;
    else if (p == "lbfgs") cfg.minimize.policy = StepPolicy::LBFGS;
    else if (p == "spectral") cfg.minimize.policy = StepPolicy::Spectral;
    else throw ConfigError("unknown policy '" + v + "'");
  });
  with("minimize", "gtol", [&](const std::string& v) {
    cfg.minimize.gtol = to_double(v);
    if (!(cfg.minimize.gtol > 0.0)) throw ConfigError("gtol must be positive");
  });
  with("minimize", "max_iterations", [&](const std::string& v) {
    cfg.minimize.max_iterations = to_int(v);
  });
  with("minimize", "multistart", [&](const std::string& v) {
    cfg.minimize.multistart = std::max(1, to_int(v));
  });
  with("minimize", "alternate", [&](const std::string& v) { cfg.minimize.alternate = to_bool(v); });
  with("minimize", "lbfgs_memory", [&](const std::string& v) {
    cfg.minimize.lbfgs_memory = std::max(1, to_int(v));
  });
  with("run", "seed", [&](const std::string& v) {
    cfg.seed = static_cast<std::uint64_t>(to_int(v));
  });
  cfg.minimize.seed = cfg.seed;

  try {
    pb.spec.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace varpen
