#pragma once

// Scenario files and the on-disk formats used by the command-line tool.
//
// Config syntax: one `dotted.key = value` per line, `#` starts a comment.
// Lists are comma separated. Unknown keys and duplicates are rejected so a
// typo never silently falls back to a default.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sirctl/epi_analysis.hpp"
#include "sirctl/errors.hpp"
#include "sirctl/opt_control.hpp"
#include "sirctl/parallel.hpp"
#include "sirctl/sir_core.hpp"
#include "sirctl/strategies.hpp"

namespace sirctl {

/// Fixed-precision number formatting shared by every output file.
inline std::string fmt_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

}  // namespace detail

/// Raw key/value pairs with the line each came from.
class ConfigFile {
 public:
  struct Entry {
    std::string value;
    int line = 0;
    bool used = false;
  };

  static ConfigFile parse(std::istream& in, const std::string& origin = "config") {
    ConfigFile cfg;
    cfg.origin_ = origin;
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
      ++line;
      if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
      const std::string text = detail::trim(raw);
      if (text.empty()) continue;
      const auto eq = text.find('=');
      if (eq == std::string::npos)
        throw ConfigError(origin + ":" + std::to_string(line) + ": expected 'key = value'");
      const std::string key = detail::trim(text.substr(0, eq));
      const std::string value = detail::trim(text.substr(eq + 1));
      if (key.empty())
        throw ConfigError(origin + ":" + std::to_string(line) + ": empty key");
      if (auto it = cfg.entries_.find(key); it != cfg.entries_.end())
        throw ConfigError(origin + ":" + std::to_string(line) + ": duplicate key '" + key +
                          "' (first set on line " + std::to_string(it->second.line) + ")");
      cfg.entries_[key] = {value, line, false};
    }
    return cfg;
  }

  static ConfigFile load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse(in, path);
  }

  bool has(const std::string& key) const { return entries_.count(key) != 0; }

  std::optional<std::string> text(const std::string& key) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    it->second.used = true;
    return it->second.value;
  }

  void number(const std::string& key, double& out) {
    if (auto v = text(key)) out = to_number(key, *v);
  }

  void integer(const std::string& key, int& out) {
    if (auto v = text(key)) {
      const double d = to_number(key, *v);
      if (d != std::floor(d) || std::abs(d) > 1e9) fail(key, "expected an integer, got '" + *v + "'");
      out = static_cast<int>(d);
    }
  }

  void count(const std::string& key, std::size_t& out) {
    int n = static_cast<int>(out);
    integer(key, n);
    if (n < 0) fail(key, "must be >= 0");
    out = static_cast<std::size_t>(n);
  }

  void count(const std::string& key, unsigned& out) {
    std::size_t n = out;
    count(key, n);
    out = static_cast<unsigned>(n);
  }

  void numbers(const std::string& key, std::vector<double>& out) {
    if (auto v = text(key)) {
      out.clear();
      if (v->empty()) return;
      for (const auto& item : detail::split(*v, ',')) out.push_back(to_number(key, item));
    }
  }

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    auto it = entries_.find(key);
    const std::string where =
        it == entries_.end() ? origin_ : origin_ + ":" + std::to_string(it->second.line);
    throw ConfigError(where + ": key '" + key + "': " + msg);
  }

  /// Throws on the first key nobody asked for.
  void reject_unused() const {
    const Entry* first = nullptr;
    std::string first_key;
    for (const auto& [k, e] : entries_)
      if (!e.used && (!first || e.line < first->line)) {
        first = &e;
        first_key = k;
      }
    if (first)
      throw ConfigError(origin_ + ":" + std::to_string(first->line) + ": unknown key '" +
                        first_key + "'");
  }

  const std::string& origin() const { return origin_; }

 private:
  double to_number(const std::string& key, const std::string& v) const {
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      fail(key, "expected a number, got '" + v + "'");
    }
  }

  std::string origin_;
  std::map<std::string, Entry> entries_;
};

inline const std::vector<std::string>& strategy_names() {
  static const std::vector<std::string> names = {"open_loop", "goldilocks", "wms",
                                                 "p_opt",     "weighted",   "quantized",
                                                 "custom"};
  return names;
}

struct ScenarioConfig {
  ModelParams model;
  std::optional<EpiState> initial;  ///< overrides (1 - epsilon, epsilon); custom schedules only
  EpidemiologicalObjective objective{0.0, 0.1};
  double horizon = kDefaultHorizon;
  double dt = kDefaultDt;
  double output_stride = 0.1;
  double tau_f = kDefaultTauF;
  unsigned threads = 0;
  std::string strategy = "open_loop";
  ControlSchedule schedule;  ///< used by the custom strategy
  OptConfig opt;
  WeightedConfig weighted;
  QuantizedConfig quantized;
  std::vector<double> phase_levels;  ///< empty: the level of the first trajectory point
  std::vector<double> phase_s_bars;  ///< empty: s_star_target
  int phase_grid_points = 400;
  std::string output_dir = "out";

  /// Pushes the shared settings (objective, horizon, step, threads) into the solver configs.
  void sync() {
    opt.i_max = objective.i_max;
    opt.s_star_target = objective.s_star_target;
    opt.report_horizon = horizon;
    opt.verify_dt = dt;
    opt.threads = threads;
    weighted.report_horizon = horizon;
    weighted.verify_dt = dt;
    weighted.threads = threads;
    quantized.report_horizon = horizon;
    quantized.dt = dt;
    quantized.threads = threads;
  }

  void validate() const {
    model.validate();
    objective.validate();
    if (!(horizon > 0.0)) throw DomainError("sim.horizon must be > 0");
    if (!(dt > 0.0)) throw DomainError("sim.dt must be > 0");
    if (!(output_stride > 0.0)) throw DomainError("sim.output_stride must be > 0");
    if (!(tau_f > 0.0 && tau_f <= horizon)) throw DomainError("design.tau_f must lie in (0, sim.horizon]");
    if (std::find(strategy_names().begin(), strategy_names().end(), strategy) ==
        strategy_names().end())
      throw DomainError("unknown strategy '" + strategy + "'");
    if (initial) require_admissible(*initial, "initial state");
    schedule.validate(model);
    if (schedule.end_time() > horizon) throw DomainError("schedule.segments run past sim.horizon");
    opt.validate();
    weighted.validate();
    quantized.validate(model);
    if (phase_grid_points < 2) throw DomainError("phase.grid_points must be >= 2");
    for (double s : phase_s_bars)
      if (!(s > 0.0 && s <= 1.0)) throw DomainError("phase.s_bars entries must lie in (0, 1]");
  }
};

namespace detail {

/// Parses `start:end:law` items separated by commas; law is a number or `inverse_s`.
inline ControlSchedule parse_schedule(ConfigFile& cf, const std::string& key, const std::string& v) {
  ControlSchedule sched;
  if (v.empty()) return sched;
  for (const auto& item : split(v, ',')) {
    const auto parts = split(item, ':');
    if (parts.size() != 3) cf.fail(key, "segment '" + item + "' is not start:end:law");
    double a, b;
    try {
      a = std::stod(parts[0]);
      b = std::stod(parts[1]);
    } catch (const std::exception&) {
      cf.fail(key, "segment '" + item + "' has a non-numeric time");
    }
    if (parts[2] == "inverse_s") {
      sched.add(a, b, InverseSusceptibleLaw{});
    } else {
      try {
        sched.add_constant(a, b, std::stod(parts[2]));
      } catch (const std::exception&) {
        cf.fail(key, "segment '" + item + "' has law '" + parts[2] + "'");
      }
    }
  }
  return sched;
}

}  // namespace detail

/// Reads every recognised key; validation failures become ConfigError.
inline ScenarioConfig read_scenario(ConfigFile& cf) {
  ScenarioConfig sc;
  cf.number("model.r_bar", sc.model.r_bar);
  cf.number("model.r_min", sc.model.r_min);
  cf.number("model.gamma", sc.model.gamma);
  cf.number("model.epsilon", sc.model.epsilon);

  const bool has_s0 = cf.has("initial.s0"), has_i0 = cf.has("initial.i0");
  if (has_s0 != has_i0) cf.fail(has_s0 ? "initial.s0" : "initial.i0", "initial.s0 and initial.i0 go together");
  if (has_s0) {
    EpiState x0{};
    cf.number("initial.s0", x0.s);
    cf.number("initial.i0", x0.i);
    sc.initial = x0;
  }

  cf.number("objective.i_max", sc.objective.i_max);
  sc.objective.s_star_target = sc.model.r_bar > 0.0 ? herd_immunity(sc.model.r_bar) : 0.0;
  cf.number("objective.s_star_target", sc.objective.s_star_target);

  cf.number("sim.horizon", sc.horizon);
  cf.number("sim.dt", sc.dt);
  cf.number("sim.output_stride", sc.output_stride);
  cf.count("sim.threads", sc.threads);
  cf.number("design.tau_f", sc.tau_f);
  if (auto s = cf.text("strategy")) sc.strategy = *s;
  if (auto s = cf.text("schedule.segments")) sc.schedule = detail::parse_schedule(cf, "schedule.segments", *s);

  cf.number("opt.t_horizon", sc.opt.t_horizon);
  cf.integer("opt.n_intervals", sc.opt.n_intervals);
  cf.number("opt.terminal_tol", sc.opt.terminal_tol);
  cf.numbers("opt.penalties", sc.opt.penalties);
  cf.integer("opt.max_outer_iters", sc.opt.max_outer_iters);
  cf.integer("opt.max_inner_iters", sc.opt.max_inner_iters);
  cf.number("opt.dt", sc.opt.dt);
  cf.number("opt.fd_step", sc.opt.fd_step);

  cf.number("weighted.alpha_i", sc.weighted.alpha_i);
  cf.number("weighted.alpha_r", sc.weighted.alpha_r);
  cf.number("weighted.t_horizon", sc.weighted.t_horizon);
  cf.integer("weighted.n_intervals", sc.weighted.n_intervals);
  cf.integer("weighted.max_inner_iters", sc.weighted.max_inner_iters);
  cf.number("weighted.dt", sc.weighted.dt);
  cf.number("weighted.fd_step", sc.weighted.fd_step);

  cf.numbers("quantized.levels", sc.quantized.levels);
  cf.number("quantized.dwell_min", sc.quantized.dwell_min);
  cf.number("quantized.t_horizon", sc.quantized.t_horizon);
  cf.count("quantized.beam_width", sc.quantized.beam_width);
  cf.number("quantized.merge_ds", sc.quantized.merge_ds);
  cf.number("quantized.merge_dlog_i", sc.quantized.merge_dlog_i);
  cf.number("quantized.terminal_tol", sc.quantized.terminal_tol);

  cf.numbers("phase.v_levels", sc.phase_levels);
  cf.numbers("phase.s_bars", sc.phase_s_bars);
  cf.integer("phase.grid_points", sc.phase_grid_points);
  if (auto s = cf.text("output.dir")) sc.output_dir = *s;

  cf.reject_unused();
  sc.sync();
  try {
    sc.validate();
  } catch (const DomainError& e) {
    throw ConfigError(cf.origin() + ": invalid configuration: " + e.what());
  }
  return sc;
}

inline ScenarioConfig load_scenario(const std::string& path) {
  ConfigFile cf = ConfigFile::load(path);
  return read_scenario(cf);
}

inline ScenarioConfig parse_scenario(const std::string& text) {
  std::istringstream in(text);
  ConfigFile cf = ConfigFile::parse(in);
  return read_scenario(cf);
}

/// Runs one named strategy with the scenario's settings.
inline StrategyReport run_strategy(const ScenarioConfig& sc, const std::string& name) {
  const DesignOptions design{sc.tau_f, sc.horizon, sc.dt};
  if (name == "open_loop") {
    if (sc.initial)
      return evaluate_schedule("open_loop", sc.model, sc.objective, {}, *sc.initial, sc.horizon, sc.dt);
    return open_loop(sc.model, sc.objective, sc.horizon, sc.dt);
  }
  if (name == "goldilocks") return goldilocks(sc.model, sc.objective, design);
  if (name == "wms") return wms(sc.model, sc.objective, design);
  if (name == "p_opt") return solve_p_opt(sc.model, sc.opt);
  if (name == "weighted") return solve_weighted(sc.model, sc.weighted, sc.objective);
  if (name == "quantized") return solve_quantized(sc.model, sc.quantized, sc.objective);
  if (name == "custom")
    return evaluate_schedule("custom", sc.model, sc.objective, sc.schedule,
                             sc.initial.value_or(sc.model.initial_state()), sc.horizon, sc.dt);
  throw ConfigError("unknown strategy '" + name + "'");
}

// ---------------------------------------------------------------------------
// Trajectory CSV

inline constexpr const char* kTrajectoryHeader = "t_days,tau,S,I,R,V_lyap";

struct CsvRow {
  double t, tau, s, i, r, v;
};

/// Rows written for a report: one per output stride, plus every schedule
/// breakpoint twice (R just before, then R from the breakpoint on) so the
/// control steps can be integrated from the file alone.
inline std::vector<CsvRow> trajectory_rows(const StrategyReport& rep, const ModelParams& params,
                                           double s_bar, double stride) {
  std::vector<CsvRow> rows;
  const auto& samples = rep.trajectory.samples;
  if (samples.empty()) return rows;
  const std::vector<double> bps = detail::breakpoints(rep.schedule, samples.back().t + 1.0);
  auto is_breakpoint = [&](double t) {
    return std::any_of(bps.begin(), bps.end(), [&](double b) { return std::abs(b - t) <= 1e-9; });
  };
  auto left_rate = [&](double t, const EpiState& x) {
    for (const auto& seg : rep.schedule.segments())
      if (std::abs(seg.t_end - t) <= 1e-9) return apply_law(seg.law, x, params);
    return params.r_bar;
  };
  auto make = [&](const Sample& smp, double r) {
    const EpiState x{smp.s, smp.i};
    return CsvRow{smp.t, smp.tau, smp.s, smp.i, r, lyapunov_value(x, s_bar)};
  };

  const double snap = 1e-9;
  double next_out = 0.0;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const Sample& smp = samples[k];
    const bool last = k + 1 == samples.size();
    const bool bp = is_breakpoint(smp.t);
    if (bp && k > 0) {
      const double rl = left_rate(smp.t, {smp.s, smp.i});
      rows.push_back(make(smp, rl));
    }
    if (bp || last || smp.t >= next_out - snap) {
      rows.push_back(make(smp, smp.r));
      while (next_out <= smp.t + snap) next_out += stride;
    }
  }
  return rows;
}

inline void write_trajectory_csv(std::ostream& out, const std::vector<CsvRow>& rows) {
  out << kTrajectoryHeader << '\n';
  for (const auto& r : rows)
    out << fmt_num(r.t) << ',' << fmt_num(r.tau) << ',' << fmt_num(r.s) << ',' << fmt_num(r.i)
        << ',' << fmt_num(r.r) << ',' << fmt_num(r.v) << '\n';
}

inline std::vector<CsvRow> read_trajectory_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != kTrajectoryHeader)
    throw ConfigError("trajectory CSV: missing header '" + std::string(kTrajectoryHeader) + "'");
  std::vector<CsvRow> rows;
  int n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split(line, ',');
    if (f.size() != 6) throw ConfigError("trajectory CSV line " + std::to_string(n) + ": expected 6 fields");
    try {
      rows.push_back({std::stod(f[0]), std::stod(f[1]), std::stod(f[2]), std::stod(f[3]),
                      std::stod(f[4]), std::stod(f[5])});
    } catch (const std::exception&) {
      throw ConfigError("trajectory CSV line " + std::to_string(n) + ": bad number");
    }
  }
  return rows;
}

struct CsvMetrics {
  double efs, ipp, sdi;
};

/// EFS, IPP and SDI recomputed from written rows alone. SDI uses the
/// trapezoid rule on every row interval, which is exact for constant steps
/// thanks to the doubled breakpoint rows.
inline CsvMetrics metrics_from_rows(const std::vector<CsvRow>& rows, const ModelParams& params) {
  if (rows.empty()) throw DomainError("metrics_from_rows: no rows");
  double max_i = 0.0, area = 0.0;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    max_i = std::max(max_i, rows[k].i);
    if (k > 0)
      area += 0.5 * ((params.r_bar - rows[k - 1].r) + (params.r_bar - rows[k].r)) *
              (rows[k].t - rows[k - 1].t);
  }
  const double s = std::clamp(rows.back().s, 0.0, 1.0);
  const double i = std::clamp(rows.back().i, 0.0, 1.0 - s);
  return {s_infinity(params.r_bar, s, i).efs,
          std::max(max_i, peak_prevalence(params.r_bar, s, i)), area};
}

// ---------------------------------------------------------------------------
// Reports

inline std::string law_text(const ControlLaw& law) {
  if (const auto* c = std::get_if<ConstantLaw>(&law)) return "constant " + fmt_num(c->r);
  return "inverse_s";
}

inline std::string status_of(const StrategyReport& rep) {
  for (const auto& n : rep.notes)
    if (n.find("not converged") != std::string::npos) return "not_converged";
  return rep.feasible ? "feasible" : "infeasible";
}

inline void write_report(std::ostream& out, const StrategyReport& rep) {
  out << "strategy: " << rep.strategy << '\n';
  out << "status: " << status_of(rep) << '\n';
  out << "feasible: " << (rep.feasible ? "true" : "false") << '\n';
  out << "efs: " << fmt_num(rep.efs) << '\n';
  out << "efs_horizon: " << fmt_num(rep.efs_horizon) << '\n';
  out << "ipp: " << fmt_num(rep.ipp) << '\n';
  out << "sdi: " << fmt_num(rep.sdi) << '\n';
  out << "s_inf: " << fmt_num(rep.s_inf) << '\n';
  out << "s_end: " << fmt_num(rep.final_state.s) << '\n';
  out << "i_end: " << fmt_num(rep.final_state.i) << '\n';
  out << "horizon_days: " << fmt_num(rep.trajectory.final_time()) << '\n';
  for (const auto& [k, v] : rep.timings) out << "timing." << k << ": " << fmt_num(v) << '\n';
  for (const auto& [k, v] : rep.values) out << "value." << k << ": " << fmt_num(v) << '\n';
  const auto& segs = rep.schedule.segments();
  out << "segments: " << segs.size() << '\n';
  for (std::size_t k = 0; k < segs.size(); ++k)
    out << "segment." << k << ": " << fmt_num(segs[k].t_start) << ' ' << fmt_num(segs[k].t_end)
        << ' ' << law_text(segs[k].law) << '\n';
  for (std::size_t k = 0; k < rep.notes.size(); ++k) out << "note." << k << ": " << rep.notes[k] << '\n';
}

/// A report file read back as ordered key/value pairs.
inline std::vector<std::pair<std::string, std::string>> read_report(std::istream& in) {
  std::vector<std::pair<std::string, std::string>> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto c = line.find(": ");
    if (c == std::string::npos) continue;
    kv.emplace_back(line.substr(0, c), line.substr(c + 2));
  }
  return kv;
}

namespace detail {
inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
  out << content;
}

inline std::string render_report(const StrategyReport& rep) {
  std::ostringstream os;
  write_report(os, rep);
  return os.str();
}

inline std::string render_csv(const StrategyReport& rep, const ScenarioConfig& sc) {
  std::ostringstream os;
  write_trajectory_csv(os, trajectory_rows(rep, sc.model, sc.objective.s_star_target, sc.output_stride));
  return os.str();
}
}  // namespace detail

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitInfeasible = 2 };

struct RunOutcome {
  int exit_code = kExitOk;
  std::optional<StrategyReport> report;
  std::string error;  ///< set when the strategy itself failed
};

/// Runs the configured strategy and writes trajectory.csv and report.txt into the output directory.
inline RunOutcome run_scenario(const ScenarioConfig& sc) {
  namespace fs = std::filesystem;
  fs::create_directories(sc.output_dir);
  RunOutcome out;
  try {
    StrategyReport rep = run_strategy(sc, sc.strategy);
    detail::write_file(fs::path(sc.output_dir) / "trajectory.csv", detail::render_csv(rep, sc));
    detail::write_file(fs::path(sc.output_dir) / "report.txt", detail::render_report(rep));
    out.exit_code = rep.feasible ? kExitOk : kExitInfeasible;
    out.report = std::move(rep);
  } catch (const Infeasible& e) {
    out = {kExitInfeasible, std::nullopt, e.what()};
  } catch (const NotConverged& e) {
    out = {kExitInfeasible, std::nullopt, e.what()};
  }
  if (!out.report) {
    detail::write_file(fs::path(sc.output_dir) / "report.txt",
                       "strategy: " + sc.strategy + "\nstatus: infeasible\nfeasible: false\nerror: " +
                           out.error + "\n");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Comparison

struct ComparisonRow {
  std::string strategy;
  std::optional<StrategyReport> report;
  std::string error;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;
  bool any_failed() const {
    return std::any_of(rows.begin(), rows.end(), [](const auto& r) { return !r.report; });
  }
};

namespace detail {
inline std::string timings_text(const StrategyReport& rep) {
  std::string s;
  for (const auto& [k, v] : rep.timings) {
    if (!s.empty()) s += ' ';
    s += k + "=" + fmt_num(v);
  }
  return s;
}
}  // namespace detail

inline void write_comparison_csv(std::ostream& out, const ComparisonTable& table) {
  out << "strategy,efs,efs_horizon,ipp,sdi,timings,feasible,status\n";
  for (const auto& row : table.rows) {
    if (!row.report) {
      out << row.strategy << ",,,,,,false,\"error: " << row.error << "\"\n";
      continue;
    }
    const auto& r = *row.report;
    out << row.strategy << ',' << fmt_num(r.efs) << ',' << fmt_num(r.efs_horizon) << ','
        << fmt_num(r.ipp) << ',' << fmt_num(r.sdi) << ",\"" << detail::timings_text(r) << "\","
        << (r.feasible ? "true" : "false") << ',' << status_of(r) << '\n';
  }
}

inline void write_comparison_text(std::ostream& out, const ComparisonTable& table) {
  std::vector<std::vector<std::string>> cells = {
      {"strategy", "EFS", "EFS(horizon)", "IPP", "SDI", "feasible", "timings"}};
  for (const auto& row : table.rows) {
    if (!row.report) {
      cells.push_back({row.strategy, "-", "-", "-", "-", "error", row.error});
      continue;
    }
    const auto& r = *row.report;
    cells.push_back({row.strategy, fmt_num(r.efs), fmt_num(r.efs_horizon), fmt_num(r.ipp),
                     fmt_num(r.sdi), r.feasible ? "yes" : "no", detail::timings_text(r)});
  }
  std::vector<std::size_t> width(cells[0].size(), 0);
  for (const auto& line : cells)
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
  for (const auto& line : cells) {
    std::string text;
    for (std::size_t c = 0; c < line.size(); ++c) {
      std::string cell = line[c];
      if (c + 1 < line.size()) cell.resize(width[c] + 2, ' ');
      text += cell;
    }
    out << text << '\n';
  }
}

/// Runs each strategy into its own subdirectory, then writes comparison.csv and comparison.txt.
inline ComparisonTable compare(const ScenarioConfig& sc, const std::vector<std::string>& strategies) {
  namespace fs = std::filesystem;
  if (strategies.empty()) throw ConfigError("compare: no strategies given");
  for (const auto& s : strategies)
    if (std::find(strategy_names().begin(), strategy_names().end(), s) == strategy_names().end())
      throw ConfigError("compare: unknown strategy '" + s + "'");
  fs::create_directories(sc.output_dir);

  ComparisonTable table;
  table.rows.resize(strategies.size());
  parallel_for(
      strategies.size(),
      [&](std::size_t k) {
        ComparisonRow& row = table.rows[k];
        row.strategy = strategies[k];
        try {
          StrategyReport rep = run_strategy(sc, strategies[k]);
          const fs::path dir = fs::path(sc.output_dir) / strategies[k];
          fs::create_directories(dir);
          detail::write_file(dir / "trajectory.csv", detail::render_csv(rep, sc));
          detail::write_file(dir / "report.txt", detail::render_report(rep));
          row.report = std::move(rep);
        } catch (const std::exception& e) {
          row.error = e.what();
        }
      },
      sc.threads);

  std::ostringstream csv, txt;
  write_comparison_csv(csv, table);
  write_comparison_text(txt, table);
  detail::write_file(fs::path(sc.output_dir) / "comparison.csv", csv.str());
  detail::write_file(fs::path(sc.output_dir) / "comparison.txt", txt.str());
  return table;
}

// ---------------------------------------------------------------------------
// Phase portrait

struct LevelPoint {
  double s_bar, level, s, i;
};

/// Points of V(S, I; s_bar) = level solved for I on a uniform S grid over
/// (0, 1], with S = s_bar added. Only admissible points (I >= 0, S + I <= 1) are kept.
inline std::vector<LevelPoint> level_curve(double s_bar, double level, int grid_points) {
  if (!(s_bar > 0.0 && s_bar <= 1.0)) throw DomainError("level_curve: s_bar outside (0, 1]");
  if (grid_points < 2) throw DomainError("level_curve: need at least 2 grid points");
  std::vector<double> grid;
  for (int k = 1; k <= grid_points; ++k) grid.push_back(static_cast<double>(k) / grid_points);
  grid.push_back(s_bar);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  std::vector<LevelPoint> pts;
  for (double s : grid) {
    const double i = level - (s - s_bar - s_bar * std::log(s / s_bar));
    if (i >= 0.0 && s + i <= 1.0 + 1e-12) pts.push_back({s_bar, level, s, i});
  }
  return pts;
}

struct PhaseData {
  StrategyReport report;
  std::vector<LevelPoint> levels;
};

/// Writes phase_trajectory.csv (the configured strategy's run) and phase_levels.csv.
inline PhaseData phase_portrait_data(const ScenarioConfig& sc) {
  namespace fs = std::filesystem;
  fs::create_directories(sc.output_dir);
  PhaseData data{run_strategy(sc, sc.strategy), {}};

  const auto rows = trajectory_rows(data.report, sc.model, sc.objective.s_star_target, sc.output_stride);
  std::vector<double> s_bars = sc.phase_s_bars;
  if (s_bars.empty()) s_bars.push_back(sc.objective.s_star_target);
  for (double sb : s_bars) {
    std::vector<double> levels = sc.phase_levels;
    if (levels.empty() && !rows.empty()) levels.push_back(lyapunov_value({rows[0].s, rows[0].i}, sb));
    for (double c : levels) {
      const auto pts = level_curve(sb, c, sc.phase_grid_points);
      data.levels.insert(data.levels.end(), pts.begin(), pts.end());
    }
  }

  std::ostringstream traj, lv;
  traj << "t_days,S,I,V_lyap\n";
  for (const auto& r : rows)
    traj << fmt_num(r.t) << ',' << fmt_num(r.s) << ',' << fmt_num(r.i) << ',' << fmt_num(r.v) << '\n';
  lv << "s_bar,level,S,I\n";
  for (const auto& p : data.levels)
    lv << fmt_num(p.s_bar) << ',' << fmt_num(p.level) << ',' << fmt_num(p.s) << ',' << fmt_num(p.i) << '\n';
  detail::write_file(fs::path(sc.output_dir) / "phase_trajectory.csv", traj.str());
  detail::write_file(fs::path(sc.output_dir) / "phase_levels.csv", lv.str());
  return data;
}

}  // namespace sirctl
