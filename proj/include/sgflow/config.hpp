#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <json.hpp>

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "sgflow/aubry_mather.hpp"
#include "sgflow/elliptic_operator.hpp"
#include "sgflow/error.hpp"
#include "sgflow/flow.hpp"
#include "sgflow/grid.hpp"
#include "sgflow/potential.hpp"

namespace sgflow {

/// Shortest decimal text that reads back to the same double.
inline std::string format_double(double x) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

/// Everything a subcommand needs, read from a sectioned key=value file.
///
///   [grid]          d, N, n, bc
///   [operator]      coeff, alpha, discretization
///   [potential]     potential, periodic_y, v22_bound
///   [flow]          gamma ("auto" or a number), beta, dt, t_end, tol_residual,
///                   scheme, max_picard, u0, u0_amplitude, store_every
///   [run]           seed, out
///   [verify]        only, tolerance
///   [compare]       pairs, horizon, long_horizon, amplitude, exploratory
///   [aubry_mather]  omega, omegas, golden_levels, window, t_end, phase_time,
///                   store_every, cube_side
struct RunConfig {
  // grid
  int dim = 1;
  int period = 1;
  int points = 64;
  Boundary bc = Boundary::Periodic;
  // operator
  std::string coeff = "identity";
  double alpha = 1.0;
  Discretization discretization = Discretization::FiniteDifference;
  // potential
  std::string potential = "pendulum:0.05";
  bool periodic_y = true;
  std::optional<double> v22_bound;
  // flow
  std::string gamma_text = "auto";
  FlowParams params;  // params.gamma is the resolved value
  std::string scheme = "etd1";
  std::string u0 = "random";
  double u0_amplitude = 1.0;
  std::size_t store_every = 1;
  // run
  std::uint64_t seed = 1;
  std::string out = "out";
  // verify
  std::vector<std::string> verify_only;
  std::optional<double> verify_tolerance;
  // compare
  int pairs = 20;
  double horizon = 2.0;
  double long_horizon = 0.0;  // 0 disables the long run
  double amplitude = 1.0;
  bool exploratory = false;
  // aubry_mather
  std::string omega = "1/2";
  std::string omegas;  // list "1/2 2/3 ..." or a file path; empty means golden convergents
  int golden_levels = 4;
  int window = 3;
  double am_t_end = 200.0;  // descent horizon for minimize and sweep
  double phase_time = 5.0;
  std::size_t am_store_every = 10;
  double cube_side = 1.0;

  Grid grid() const { return Grid(dim, period, points, bc); }
  EllipticOperator op() const { return EllipticOperator(grid(), CoefficientField::parse(coeff, dim), alpha, discretization); }
  Potential make_potential() const { return Potential::parse(potential, periodic_y, v22_bound); }
  StepScheme step_scheme() const {
    if (scheme == "picard") return StepScheme::picard(params.max_picard);
    return StepScheme::parse(scheme);
  }
  FlowProblem problem() const { return FlowProblem(op(), params, make_potential()); }

  /// Replace "auto" gamma by 1.1 sup|V22| + 0.1 and validate every setting.
  void resolve() {
    try {
      const Potential v = make_potential();
      if (gamma_text == "auto") {
        params.gamma = auto_gamma(v, dim);
      } else {
        params.gamma = to_double("flow.gamma", gamma_text);
      }
      params.validate();
      if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("operator.alpha must lie in (0,1]");
      if (!(params.t_end >= 0.0)) throw ConfigError("flow.t_end must be nonnegative");
      if (!(am_t_end >= 0.0)) throw ConfigError("aubry_mather.t_end must be nonnegative");
      step_scheme();
      (void)grid();
      CoefficientField::parse(coeff, dim);
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }

  static RunConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    return from_stream(in);
  }

  static RunConfig from_string(const std::string& text) {
    std::istringstream in(text);
    return from_stream(in);
  }

  static RunConfig from_stream(std::istream& in) {
    boost::property_tree::ptree pt;
    try {
      boost::property_tree::ini_parser::read_ini(in, pt);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    RunConfig c;
    for (const auto& [section, body] : pt) {
      if (body.empty() && !body.data().empty()) throw ConfigError("config key '" + section + "' outside a section");
      for (const auto& [key, value] : body) c.set(section + "." + key, value.data());
    }
    return c;
  }

  /// Set one "section.key" entry from text; unknown keys are errors.
  void set(const std::string& dotted, std::string value) {
    value = unquote(value);
    const std::string& k = dotted;
    if (k == "grid.d") dim = to_int(k, value);
    else if (k == "grid.N") period = to_int(k, value);
    else if (k == "grid.n") points = to_int(k, value);
    else if (k == "grid.bc") bc = parse_boundary(value);
    else if (k == "operator.coeff") coeff = value;
    else if (k == "operator.alpha") alpha = to_double(k, value);
    else if (k == "operator.discretization") discretization = parse_discretization(value);
    else if (k == "operator.bc") bc = parse_boundary(value);
    else if (k == "potential.potential") potential = value;
    else if (k == "potential.periodic_y") periodic_y = to_bool(k, value);
    else if (k == "potential.v22_bound") v22_bound = value.empty() ? std::nullopt : std::optional(to_double(k, value));
    else if (k == "flow.gamma") gamma_text = value;
    else if (k == "flow.beta") params.beta = to_double(k, value);
    else if (k == "flow.dt") params.dt = to_double(k, value);
    else if (k == "flow.t_end") params.t_end = to_double(k, value);
    else if (k == "flow.tol_residual") params.tol_residual = to_double(k, value);
    else if (k == "flow.scheme") scheme = value;
    else if (k == "flow.max_picard") params.max_picard = to_int(k, value);
    else if (k == "flow.u0") u0 = value;
    else if (k == "flow.u0_amplitude") u0_amplitude = to_double(k, value);
    else if (k == "flow.store_every") store_every = static_cast<std::size_t>(to_int(k, value, 1));
    else if (k == "run.seed") seed = to_u64(k, value);
    else if (k == "run.out") out = value;
    else if (k == "verify.only") verify_only = split_list(value);
    else if (k == "verify.tolerance") verify_tolerance = value.empty() ? std::nullopt : std::optional(to_double(k, value));
    else if (k == "compare.pairs") pairs = to_int(k, value, 0);
    else if (k == "compare.horizon") horizon = to_double(k, value);
    else if (k == "compare.long_horizon") long_horizon = to_double(k, value);
    else if (k == "compare.amplitude") amplitude = to_double(k, value);
    else if (k == "compare.exploratory") exploratory = to_bool(k, value);
    else if (k == "aubry_mather.omega") omega = value;
    else if (k == "aubry_mather.omegas") omegas = value;
    else if (k == "aubry_mather.golden_levels") golden_levels = to_int(k, value, 1);
    else if (k == "aubry_mather.window") window = to_int(k, value, 0);
    else if (k == "aubry_mather.t_end") am_t_end = to_double(k, value);
    else if (k == "aubry_mather.phase_time") phase_time = to_double(k, value);
    else if (k == "aubry_mather.store_every") am_store_every = static_cast<std::size_t>(to_int(k, value, 1));
    else if (k == "aubry_mather.cube_side") cube_side = to_double(k, value);
    else throw ConfigError("unknown config key '" + k + "'");
  }

  /// section -> key -> text, with gamma resolved when `resolved` is set.
  std::map<std::string, std::map<std::string, std::string>> entries(bool resolved = true) const {
    std::map<std::string, std::map<std::string, std::string>> e;
    e["grid"] = {{"d", std::to_string(dim)}, {"N", std::to_string(period)}, {"n", std::to_string(points)},
                 {"bc", to_string(bc)}};
    e["operator"] = {{"coeff", coeff}, {"alpha", format_double(alpha)}, {"discretization", to_string(discretization)}};
    e["potential"] = {{"potential", potential}, {"periodic_y", periodic_y ? "true" : "false"},
                      {"v22_bound", v22_bound ? format_double(*v22_bound) : ""}};
    e["flow"] = {{"gamma", resolved ? format_double(params.gamma) : gamma_text},
                 {"beta", format_double(params.beta)},
                 {"dt", format_double(params.dt)},
                 {"t_end", format_double(params.t_end)},
                 {"tol_residual", format_double(params.tol_residual)},
                 {"scheme", scheme},
                 {"max_picard", std::to_string(params.max_picard)},
                 {"u0", u0},
                 {"u0_amplitude", format_double(u0_amplitude)},
                 {"store_every", std::to_string(store_every)}};
    e["run"] = {{"seed", std::to_string(seed)}, {"out", out}};
    std::string only;
    for (const auto& s : verify_only) only += (only.empty() ? "" : " ") + s;
    e["verify"] = {{"only", only}, {"tolerance", verify_tolerance ? format_double(*verify_tolerance) : ""}};
    e["compare"] = {{"pairs", std::to_string(pairs)},
                    {"horizon", format_double(horizon)},
                    {"long_horizon", format_double(long_horizon)},
                    {"amplitude", format_double(amplitude)},
                    {"exploratory", exploratory ? "true" : "false"}};
    e["aubry_mather"] = {{"omega", omega},
                         {"omegas", omegas},
                         {"golden_levels", std::to_string(golden_levels)},
                         {"window", std::to_string(window)},
                         {"t_end", format_double(am_t_end)},
                         {"phase_time", format_double(phase_time)},
                         {"store_every", std::to_string(am_store_every)},
                         {"cube_side", format_double(cube_side)}};
    return e;
  }

  std::string to_ini(bool resolved = true) const {
    std::ostringstream os;
    bool first = true;
    for (const auto& [section, keys] : entries(resolved)) {
      os << (first ? "" : "\n") << '[' << section << "]\n";
      first = false;
      for (const auto& [k, v] : keys) os << k << " = " << v << '\n';
    }
    return os.str();
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    for (const auto& [section, keys] : entries(true))
      for (const auto& [k, v] : keys) j[section][k] = v;
    j["flow"]["gamma_source"] = gamma_text;
    return j;
  }

 private:
  static std::string unquote(std::string s) {
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return s;
  }
  static std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    for (std::string w; is >> w;) {
      for (auto& part : split_trimmed(w, ','))
        if (!part.empty()) out.push_back(part);
    }
    return out;
  }
  static double to_double(const std::string& key, const std::string& v) {
    try {
      std::size_t pos = 0;
      const double x = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return x;
    } catch (const std::logic_error&) {
      throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
    }
  }
  static int to_int(const std::string& key, const std::string& v, int min = std::numeric_limits<int>::min()) {
    try {
      std::size_t pos = 0;
      const int x = std::stoi(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      if (x < min) throw ConfigError("config key '" + key + "' must be >= " + std::to_string(min));
      return x;
    } catch (const std::logic_error&) {
      throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
    }
  }
  static std::uint64_t to_u64(const std::string& key, const std::string& v) {
    try {
      std::size_t pos = 0;
      if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
      const auto x = std::stoull(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return x;
    } catch (const std::logic_error&) {
      throw ConfigError("config key '" + key + "': expected an unsigned integer, got '" + v + "'");
    }
  }
  static bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
  }
};

}  // namespace sgflow
