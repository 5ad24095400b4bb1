#pragma once

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "sgflow/aubry_mather.hpp"
#include "sgflow/config.hpp"
#include "sgflow/flow.hpp"
#include "sgflow/grid.hpp"
#include "sgflow/random.hpp"
#include "sgflow/verify.hpp"

namespace sgflow {

/// Exit codes shared by all subcommands.
enum ExitCode : int { kExitOk = 0, kExitCheckFailed = 1, kExitFlowError = 2, kExitUsage = 3 };

struct CommandIo {
  std::ostream& out = std::cout;
  std::ostream& err = std::cerr;
  bool json = false;  // print the summary JSON instead of text lines
};

/// Output directory of one run. Every file written here is a deterministic
/// function of the config, except timing.json.
class RunDirectory {
 public:
  explicit RunDirectory(const std::string& dir) : dir_(dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw Error("cannot create output directory '" + dir + "': " + ec.message());
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void write(const std::string& name, const std::string& text) const {
    std::ofstream os(path(name), std::ios::binary);
    if (!os) throw Error("cannot write '" + path(name) + "'");
    os << text;
  }
  void write_json(const std::string& name, const nlohmann::ordered_json& j) const { write(name, j.dump(2) + "\n"); }

  void manifest(const std::string& command, const RunConfig& cfg, const nlohmann::ordered_json& args) const {
    nlohmann::ordered_json m;
    m["command"] = command;
    m["args"] = args;
    m["config"] = cfg.to_json();
    m["rerun"] = "sgflow " + command + " --config " + path("config.ini");
    write_json("manifest.json", m);
    write("config.ini", cfg.to_ini());
  }

 private:
  std::filesystem::path dir_;
};

namespace detail {

inline std::string csv_number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline void finish(const RunDirectory& dir, const CommandIo& io, const Stopwatch& sw,
                   const nlohmann::ordered_json& summary) {
  const double wall = sw.seconds();
  dir.write_json("timing.json", {{"wall_seconds", wall}});
  io.err << "wall time " << wall << " s\n";
  if (io.json) io.out << summary.dump(2) << '\n';
}

inline nlohmann::ordered_json json_number(double x) {
  if (std::isfinite(x)) return x;
  return nullptr;
}

}  // namespace detail

/// Initial field: "random" (band-limited, sup norm u0_amplitude), "zero",
/// "const:<c>", or a field CSV given as "file:<path>" or a bare path.
inline Field initial_field(const std::string& source, const RunConfig& cfg, const EllipticOperator& op, Rng& rng) {
  if (source == "random") return random_band_limited(op, rng, cfg.u0_amplitude);
  if (source == "zero") return Field(op.grid());
  if (source.rfind("const:", 0) == 0) return Field::constant(op.grid(), std::stod(source.substr(6)));
  const std::string path = source.rfind("file:", 0) == 0 ? source.substr(5) : source;
  if (!std::filesystem::exists(path)) throw ConfigError("unknown initial field '" + source + "'");
  Field u = read_field_csv(path);
  u.check(Field(op.grid()));
  return u;
}

inline int cmd_verify(const RunConfig& cfg, const CommandIo& io = {}) {
  detail::Stopwatch sw;
  RunDirectory dir(cfg.out);
  dir.manifest("verify", cfg, nlohmann::ordered_json::object());
  VerifySettings s;
  s.gamma = cfg.params.gamma;
  s.beta = cfg.params.beta;
  s.seed = cfg.seed;
  s.tolerance = cfg.verify_tolerance;
  const VerifyReport r = run_verify(cfg.op(), s, cfg.verify_only);
  const auto j = r.to_json();
  dir.write_json("report.json", j);
  if (!io.json) {
    char buf[256];
    for (const auto& c : r.checks) {
      std::snprintf(buf, sizeof buf, "%s %-15s %-28s error %.3e  tol %.1e\n", c.pass ? "PASS" : "FAIL",
                    c.suite.c_str(), c.name.c_str(), c.error, c.tolerance);
      io.out << buf;
    }
    io.out << r.checks.size() - r.failures() << "/" << r.checks.size() << " checks passed\n";
  }
  detail::finish(dir, io, sw, j);
  return r.ok() ? kExitOk : kExitCheckFailed;
}

inline void write_trajectory_csv(std::ostream& os, const std::vector<StepDiagnostics>& diags) {
  os << "t,energy,residual,max_norm\n";
  for (const auto& d : diags)
    os << detail::csv_number(d.t) << ',' << detail::csv_number(d.energy) << ',' << detail::csv_number(d.residual)
       << ',' << detail::csv_number(d.max_norm) << '\n';
}

/// Evolve u0 and write trajectory.csv, final.csv and summary.json. With a
/// zero potential the summary also carries the distance to the exact
/// linear solution e^{-t nu (gamma + nu)^{-beta}} u0.
inline int cmd_flow(const RunConfig& cfg, const std::string& u0_source, double t_start = 0.0,
                    const CommandIo& io = {}) {
  detail::Stopwatch sw;
  RunDirectory dir(cfg.out);
  dir.manifest("flow", cfg, {{"u0", u0_source}, {"t_start", t_start}});
  const FlowProblem prob = cfg.problem();
  Rng rng(cfg.seed);
  const Field u0 = initial_field(u0_source, cfg, prob.op(), rng);
  write_field_csv(dir.path("initial.csv"), u0);

  nlohmann::ordered_json s;
  s["scheme"] = cfg.step_scheme().name();
  s["gamma"] = cfg.params.gamma;
  EvolveOptions opts;
  opts.store_every = cfg.store_every;
  opts.t_start = t_start;
  int code = kExitOk;
  try {
    const Trajectory tr = evolve(u0, cfg.step_scheme(), prob, opts);
    std::ostringstream csv;
    write_trajectory_csv(csv, tr.diagnostics);
    dir.write("trajectory.csv", csv.str());
    write_field_csv(dir.path("final.csv"), tr.final_state());
    const auto& last = tr.diagnostics.back();
    s["steps"] = tr.diagnostics.size() - 1;
    s["final_time"] = tr.final_time;
    s["final_energy"] = last.energy;
    s["final_residual"] = last.residual;
    s["max_norm"] = last.max_norm;
    s["converged"] = tr.converged;
    s["energy_increases"] = tr.energy_increases.size();
    if (prob.potential().is_zero()) {
      const double T = tr.final_time - t_start, g = cfg.params.gamma, b = cfg.params.beta;
      const Field exact =
          prob.op().apply_function(u0, [=](double nu) { return std::exp(-T * nu * std::pow(g + nu, -b)); });
      s["linear_oracle_error"] = (tr.final_state() - exact).max_abs();
    }
    if (!io.json) {
      io.out << "steps " << tr.diagnostics.size() - 1 << "  t " << tr.final_time << "  energy " << last.energy
             << "  residual " << last.residual << (tr.converged ? "  converged" : "") << '\n';
      if (!tr.energy_increases.empty()) io.out << tr.energy_increases.size() << " energy increases recorded\n";
    }
  } catch (const FlowError& e) {
    write_field_csv(dir.path("last_good.csv"), e.last_good());
    s["error"] = e.what();
    s["last_good_time"] = e.time();
    io.err << "flow aborted: " << e.what() << "; last good state written to " << dir.path("last_good.csv") << '\n';
    code = kExitFlowError;
  }
  dir.write_json("summary.json", s);
  detail::finish(dir, io, sw, s);
  return code;
}

/// Run seeded ordered pairs (u0 = v0 + |w|, or v0 + shift when `shift` is
/// set) through check_comparison and aggregate the gaps.
inline int cmd_compare(const RunConfig& cfg, std::optional<int> shift = std::nullopt, const CommandIo& io = {}) {
  detail::Stopwatch sw;
  RunDirectory dir(cfg.out);
  nlohmann::ordered_json args = {{"pairs", cfg.pairs}, {"exploratory", cfg.exploratory}};
  if (shift) args["shift"] = *shift;
  dir.manifest("compare", cfg, args);
  const FlowProblem prob = cfg.problem();
  const StepScheme scheme = cfg.step_scheme();
  Rng rng(cfg.seed);

  std::ostringstream csv;
  csv << "pair,horizon,min_gap,max_gap,passed\n";
  std::ostringstream gaps;
  gaps << "pair,t,min_gap\n";
  std::size_t violations = 0;
  double min_gap = std::numeric_limits<double>::infinity();
  double shift_error = 0.0;
  nlohmann::ordered_json first = nullptr;
  const int runs = cfg.pairs + (cfg.long_horizon > 0.0 ? 1 : 0);
  for (int i = 0; i < runs; ++i) {
    const double horizon = i < cfg.pairs ? cfg.horizon : cfg.long_horizon;
    auto [u0, v0] = random_ordered_pair(prob.op(), rng, cfg.amplitude);
    if (shift) u0 = v0.plus_constant(*shift);
    const ComparisonReport r = check_comparison(u0, v0, scheme, prob, horizon, cfg.exploratory);
    csv << i << ',' << detail::csv_number(horizon) << ',' << detail::csv_number(r.min_gap) << ','
        << detail::csv_number(r.max_gap) << ',' << (r.passed ? 1 : 0) << '\n';
    if (i == 0 || i == cfg.pairs)
      for (const auto& [t, g] : r.gap_curve) gaps << i << ',' << detail::csv_number(t) << ',' << detail::csv_number(g) << '\n';
    min_gap = std::min(min_gap, r.min_gap);
    if (shift) shift_error = std::max({shift_error, std::abs(r.min_gap - *shift), std::abs(r.max_gap - *shift)});
    if (!r.passed) {
      ++violations;
      if (first.is_null())
        first = {{"pair", i}, {"t", r.first_violation->t}, {"node", r.first_violation->node},
                 {"gap", r.first_violation->gap}};
    }
  }
  dir.write("pairs.csv", csv.str());
  dir.write("gaps.csv", gaps.str());
  nlohmann::ordered_json s;
  s["pairs"] = runs;
  s["gamma"] = cfg.params.gamma;
  s["sup_v22"] = sup_v22(prob.potential(), prob.grid().dim());
  s["min_gap"] = detail::json_number(min_gap);
  s["violations"] = violations;
  s["first_violation"] = first;
  if (shift) s["shift_error"] = shift_error;
  dir.write_json("summary.json", s);
  if (!io.json)
    io.out << runs << " pairs  min gap " << min_gap << "  violations " << violations
           << (cfg.exploratory ? "  (exploratory)" : "") << '\n';
  detail::finish(dir, io, sw, s);
  const bool bad = violations > 0 || (shift && shift_error > 1e-9);
  return bad && !cfg.exploratory ? kExitCheckFailed : kExitOk;
}

namespace detail {

/// Grid period: the configured one when it is a multiple of N, else N.
inline RunConfig for_rotation(RunConfig cfg, const RotationVector& w) {
  if (cfg.dim != w.dim) throw ConfigError("rotation vector '" + w.str() + "' does not match grid.d");
  if (cfg.period % w.N != 0) cfg.period = static_cast<int>(w.N);
  return cfg;
}

inline MinimizerOptions minimizer_options(const RunConfig& cfg) {
  MinimizerOptions o;
  o.scheme = cfg.step_scheme();
  o.phase_time = cfg.phase_time;
  o.store_every = cfg.am_store_every;
  return o;
}

}  // namespace detail

/// Descend from omega.x and write p.csv, residual.csv and summary.json.
/// Fails when the residual target is missed or a stored state is not Birkhoff.
inline int cmd_minimize(RunConfig cfg, const std::string& omega_text, const CommandIo& io = {}) {
  detail::Stopwatch sw;
  const RotationVector w = RotationVector::parse(omega_text);
  cfg.omega = w.str();
  cfg = detail::for_rotation(cfg, w);
  RunDirectory dir(cfg.out);
  dir.manifest("minimize", cfg, {{"omega", w.str()}});
  const EllipticOperator op = cfg.op();
  MinimizerOptions opts = detail::minimizer_options(cfg);
  std::size_t non_birkhoff = 0;
  opts.observer = [&](double, const TiltedField& tf) {
    if (!birkhoff_check(tf, cfg.window).ok) ++non_birkhoff;
  };
  FlowParams prm = cfg.params;
  prm.t_end = cfg.am_t_end;
  const MinimizerResult m = find_minimizer(w, op, prm, cfg.make_potential(), opts);
  write_field_csv(dir.path("p.csv"), m.u.p);
  std::ostringstream csv;
  csv << "t,residual\n";
  for (const auto& [t, r] : m.residual_curve) csv << detail::csv_number(t) << ',' << detail::csv_number(r) << '\n';
  dir.write("residual.csv", csv.str());

  const auto b = birkhoff_check(m.u, cfg.window);
  const double c = static_cast<double>(cfg.period) / 2.0;
  nlohmann::ordered_json s;
  s["omega"] = w.str();
  s["N"] = w.N;
  s["grid_period"] = cfg.period;
  s["residual"] = m.residual;
  s["converged"] = m.converged;
  s["energy"] = m.energy;
  s["time"] = m.time;
  s["snapshots"] = m.snapshots;
  s["total_shift"] = m.total_shift;
  s["birkhoff_ok"] = b.ok;
  s["non_birkhoff_snapshots"] = non_birkhoff;
  s["osc_Q"] = oscillation(m.u, {c, cfg.dim == 2 ? c : 0.0}, cfg.cube_side);
  s["sup_p"] = (m.u.p.values().array() - m.u.p.mean()).abs().maxCoeff();
  s["energy_increases"] = m.energy_increases.size();
  dir.write_json("summary.json", s);
  if (!io.json)
    io.out << "omega " << w.str() << "  residual " << m.residual << "  t " << m.time << "  snapshots " << m.snapshots
           << "  birkhoff " << (b.ok && non_birkhoff == 0 ? "ok" : "VIOLATED") << '\n';
  detail::finish(dir, io, sw, s);
  return m.converged && b.ok && non_birkhoff == 0 ? kExitOk : kExitCheckFailed;
}

/// Rotation vectors from a list ("1/2 2/3", ';' also separates) or from a
/// file with one per line (a leading "omega" header and '#' lines skipped).
inline std::vector<RotationVector> parse_omega_list(const std::string& text) {
  std::vector<std::string> words;
  if (std::filesystem::is_regular_file(text)) {
    std::ifstream in(text);
    for (std::string line; std::getline(in, line);) {
      const auto cut = line.find_first_of("#");
      line = line.substr(0, cut);
      std::istringstream is(line);
      std::string w;
      if (is >> w && w != "omega") words.push_back(w);
    }
  } else {
    std::string t = text;
    for (auto& ch : t)
      if (ch == ';') ch = ' ';
    std::istringstream is(t);
    for (std::string w; is >> w;) words.push_back(w);
  }
  std::vector<RotationVector> out;
  for (const auto& w : words) out.push_back(RotationVector::parse(w));
  if (out.empty()) throw ConfigError("no rotation vectors in '" + text + "'");
  return out;
}

/// sweep.csv rows omega,N,residual,birkhoff_ok,osc_Q,sup_p,energy_per_cell;
/// per-item errors and trend statistics in summary.json.
inline int cmd_sweep(const RunConfig& cfg, const std::vector<RotationVector>& omegas, const CommandIo& io = {}) {
  detail::Stopwatch sw;
  RunDirectory dir(cfg.out);
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (const auto& w : omegas) list.push_back(w.str());
  dir.manifest("sweep", cfg, {{"omegas", list}});
  SweepSetup setup;
  setup.dim = cfg.dim;
  setup.points_per_period = cfg.points;
  setup.coeff = cfg.coeff;
  setup.alpha = cfg.alpha;
  setup.discretization = cfg.discretization;
  setup.params = cfg.params;
  setup.params.t_end = cfg.am_t_end;
  setup.potential = cfg.make_potential();
  setup.window = cfg.window;
  setup.cube_side = cfg.cube_side;
  setup.minimizer = detail::minimizer_options(cfg);
  const SweepReport rep = sweep(omegas, setup);

  std::ostringstream csv;
  csv << "omega,N,residual,birkhoff_ok,osc_Q,sup_p,energy_per_cell\n";
  nlohmann::ordered_json items = nlohmann::ordered_json::array();
  bool ok = true;
  for (std::size_t i = 0; i < rep.items.size(); ++i) {
    const auto& it = rep.items[i];
    nlohmann::ordered_json j = {{"omega", it.omega.str()}, {"N", it.N}};
    if (it.error) {
      j["error"] = *it.error;
      ok = false;
    } else {
      csv << it.omega.str() << ',' << it.N << ',' << detail::csv_number(it.residual) << ',' << (it.birkhoff_ok ? 1 : 0)
          << ',' << detail::csv_number(it.osc_q) << ',' << detail::csv_number(it.sup_p) << ','
          << detail::csv_number(it.energy_per_cell) << '\n';
      write_field_csv(dir.path("p_" + std::to_string(i) + ".csv"), it.minimizer->p);
      j["converged"] = it.converged;
      j["osc_ratio"] = it.osc_ratio;
      j["c0_to_previous"] = it.c0_to_previous ? nlohmann::ordered_json(*it.c0_to_previous) : nullptr;
      ok = ok && it.converged && it.birkhoff_ok;
    }
    items.push_back(j);
  }
  dir.write("sweep.csv", csv.str());
  nlohmann::ordered_json s;
  s["items"] = items;
  s["osc_ratio_mean"] = rep.osc_ratio_mean;
  s["osc_ratio_max_deviation"] = rep.osc_ratio_max_deviation;
  s["sup_p_slope"] = rep.sup_p_slope;
  dir.write_json("summary.json", s);
  if (!io.json) {
    for (const auto& it : rep.items) {
      if (it.error) {
        io.out << it.omega.str() << "  error: " << *it.error << '\n';
        continue;
      }
      io.out << it.omega.str() << "  residual " << it.residual << "  birkhoff " << (it.birkhoff_ok ? "ok" : "VIOLATED")
             << "  osc_Q " << it.osc_q << "  sup_p " << it.sup_p << '\n';
    }
    io.out << "osc ratio spread " << rep.osc_ratio_max_deviation << "  sup_p slope " << rep.sup_p_slope << '\n';
  }
  detail::finish(dir, io, sw, s);
  return ok ? kExitOk : kExitCheckFailed;
}

}  // namespace sgflow
