#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "sirctl/scenario.hpp"

using namespace sirctl;
namespace fs = std::filesystem;

namespace {

const char* kGoldilocks = R"(# benchmark
model.r_bar = 2.9
model.r_min = 0.66
model.gamma = 0.1
model.epsilon = 1.49e-5
objective.i_max = 0.1
strategy = goldilocks
)";

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sirctl_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string report_value(const fs::path& p, const std::string& key) {
  std::ifstream in(p);
  for (const auto& [k, v] : read_report(in))
    if (k == key) return v;
  return {};
}

}  // namespace

TEST(Config, DefaultsAreTotal) {
  const ScenarioConfig sc = parse_scenario("model.r_bar = 2.9\n");
  EXPECT_DOUBLE_EQ(sc.objective.s_star_target, herd_immunity(2.9));
  EXPECT_DOUBLE_EQ(sc.dt, 0.01);
  EXPECT_EQ(sc.strategy, "open_loop");
  EXPECT_DOUBLE_EQ(sc.opt.s_star_target, sc.objective.s_star_target);
}

TEST(Config, CommentsListsAndOverrides) {
  const ScenarioConfig sc = parse_scenario(
      "quantized.levels = 0.7, 2.9  # two levels\n\n  sim.dt = 0.02\nobjective.s_star_target = 0.4\n");
  ASSERT_EQ(sc.quantized.levels.size(), 2u);
  EXPECT_DOUBLE_EQ(sc.quantized.levels[0], 0.7);
  EXPECT_DOUBLE_EQ(sc.dt, 0.02);
  EXPECT_DOUBLE_EQ(sc.quantized.dt, 0.02);
  EXPECT_DOUBLE_EQ(sc.objective.s_star_target, 0.4);
}

TEST(Config, ErrorsNameKeyAndLine) {
  auto message = [](const std::string& text) {
    try {
      parse_scenario(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(message("model.r_bar = 2.9\nmodel.r_bar = 3\n").find(":2: duplicate key 'model.r_bar'"),
            std::string::npos);
  EXPECT_NE(message("\nmodel.gama = 0.1\n").find(":2: unknown key 'model.gama'"), std::string::npos);
  EXPECT_NE(message("model.gamma = fast\n").find(":1: key 'model.gamma': expected a number"),
            std::string::npos);
  EXPECT_NE(message("just words\n").find(":1: expected 'key = value'"), std::string::npos);
  EXPECT_NE(message("model.r_min = 3.5\n").find("model.r_min must be < model.r_bar"), std::string::npos);
  EXPECT_NE(message("strategy = magic\n").find("unknown strategy"), std::string::npos);
  EXPECT_NE(message("opt.n_intervals = 2.5\n").find("expected an integer"), std::string::npos);
  EXPECT_NE(message("schedule.segments = 0:10\n").find("start:end:law"), std::string::npos);
}

TEST(Config, CustomSchedule) {
  const ScenarioConfig sc =
      parse_scenario("strategy = custom\nschedule.segments = 0:10:1.5, 10:20:inverse_s\n");
  ASSERT_EQ(sc.schedule.segments().size(), 2u);
  EXPECT_TRUE(is_feedback(sc.schedule.segments()[1].law));
}

TEST(Run, GoldilocksReportNearBenchmark) {
  ScenarioConfig sc = parse_scenario(kGoldilocks);
  sc.output_dir = scratch("gold").string();
  const RunOutcome out = run_scenario(sc);
  EXPECT_EQ(out.exit_code, kExitOk);
  const fs::path rep = fs::path(sc.output_dir) / "report.txt";
  EXPECT_NEAR(std::stod(report_value(rep, "efs")), 0.6600, 5e-3);
  EXPECT_NEAR(std::stod(report_value(rep, "ipp")), 0.1001, 3e-3);
  EXPECT_NEAR(std::stod(report_value(rep, "sdi")), 301.71, 5.0);
  EXPECT_EQ(report_value(rep, "feasible"), "true");
  EXPECT_FALSE(report_value(rep, "timing.tau_s").empty());
}

TEST(Run, OpenLoopCsvColumns) {
  ScenarioConfig sc = parse_scenario("strategy = open_loop\n");
  sc.output_dir = scratch("ol").string();
  const RunOutcome out = run_scenario(sc);
  EXPECT_EQ(out.exit_code, kExitInfeasible);
  std::ifstream in(fs::path(sc.output_dir) / "trajectory.csv");
  const auto rows = read_trajectory_csv(in);
  double max_i = 0.0;
  for (const auto& r : rows) max_i = std::max(max_i, r.i);
  EXPECT_NEAR(max_i, 0.288, 1e-3);
  EXPECT_NEAR(rows.back().s, 0.067, 1e-3);
  EXPECT_NEAR(rows[1].t - rows[0].t, 0.1, 1e-9);
}

TEST(Run, FilesUseLfAndTenDigits) {
  ScenarioConfig sc = parse_scenario(kGoldilocks);
  sc.output_dir = scratch("fmt").string();
  run_scenario(sc);
  const std::string csv = slurp(fs::path(sc.output_dir) / "trajectory.csv");
  EXPECT_EQ(csv.find('\r'), std::string::npos);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "t_days,tau,S,I,R,V_lyap");
  EXPECT_EQ(fmt_num(1.0 / 3.0), "0.3333333333");
}

TEST(RunProperty, CsvRoundTripReproducesReport) {
  for (const std::string strategy : {"goldilocks", "wms", "open_loop"}) {
    ScenarioConfig sc = parse_scenario(std::string(kGoldilocks) + "");
    sc.strategy = strategy;
    sc.output_dir = scratch("rt_" + strategy).string();
    const RunOutcome out = run_scenario(sc);
    ASSERT_TRUE(out.report);
    std::ifstream in(fs::path(sc.output_dir) / "trajectory.csv");
    const CsvMetrics m = metrics_from_rows(read_trajectory_csv(in), sc.model);
    const auto& rep = *out.report;
    EXPECT_NEAR(m.efs, rep.efs, 1e-8) << strategy;
    EXPECT_NEAR(m.ipp, rep.ipp, 1e-6) << strategy;
    EXPECT_NEAR(m.sdi, rep.sdi, strategy == "wms" ? 1e-4 : 1e-6) << strategy;
  }
}

TEST(RunProperty, IdenticalConfigsGiveIdenticalBytes) {
  ScenarioConfig sc = parse_scenario(kGoldilocks);
  sc.strategy = "wms";
  sc.output_dir = scratch("det_a").string();
  run_scenario(sc);
  const std::string a_csv = slurp(fs::path(sc.output_dir) / "trajectory.csv");
  const std::string a_rep = slurp(fs::path(sc.output_dir) / "report.txt");
  sc.output_dir = scratch("det_b").string();
  run_scenario(sc);
  EXPECT_EQ(a_csv, slurp(fs::path(sc.output_dir) / "trajectory.csv"));
  EXPECT_EQ(a_rep, slurp(fs::path(sc.output_dir) / "report.txt"));
}

TEST(Compare, SingleOpenLoopRow) {
  ScenarioConfig sc = parse_scenario(kGoldilocks);
  sc.output_dir = scratch("cmp1").string();
  const ComparisonTable t = compare(sc, {"open_loop"});
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(t.rows[0].report->sdi, 0.0);
  EXPECT_FALSE(t.any_failed());
  EXPECT_TRUE(fs::exists(fs::path(sc.output_dir) / "comparison.csv"));
  EXPECT_TRUE(fs::exists(fs::path(sc.output_dir) / "comparison.txt"));
}

TEST(Compare, RowsMatchIndividualRunsInOrder) {
  ScenarioConfig sc = parse_scenario(kGoldilocks);
  sc.output_dir = scratch("cmp2").string();
  sc.threads = 2;
  const ComparisonTable t = compare(sc, {"wms", "goldilocks", "open_loop"});
  ASSERT_EQ(t.rows.size(), 3u);
  EXPECT_EQ(t.rows[0].strategy, "wms");
  EXPECT_EQ(t.rows[1].strategy, "goldilocks");
  for (const auto& row : t.rows) {
    const StrategyReport solo = run_strategy(sc, row.strategy);
    EXPECT_EQ(row.report->sdi, solo.sdi);
    EXPECT_EQ(row.report->efs, solo.efs);
    EXPECT_EQ(row.report->ipp, solo.ipp);
  }
}

TEST(Compare, FailuresAreRecordedInTable) {
  ScenarioConfig sc = parse_scenario("objective.i_max = 0.3\n");
  sc.output_dir = scratch("cmp3").string();
  const ComparisonTable t = compare(sc, {"open_loop", "wms"});
  EXPECT_TRUE(t.any_failed());
  EXPECT_TRUE(t.rows[0].report);
  EXPECT_FALSE(t.rows[1].report);
  EXPECT_NE(slurp(fs::path(sc.output_dir) / "comparison.csv").find("wms,,,,,,false,\"error:"),
            std::string::npos);
  EXPECT_THROW(compare(sc, {}), ConfigError);
}

TEST(Phase, ZeroLevelIsTheEquilibriumPoint) {
  const double sb = herd_immunity(2.9);
  const auto pts = level_curve(sb, 0.0, 400);
  ASSERT_EQ(pts.size(), 1u);
  EXPECT_DOUBLE_EQ(pts[0].s, sb);
  EXPECT_DOUBLE_EQ(pts[0].i, 0.0);
}

TEST(Phase, LevelCurvePointsHaveTheirLevel) {
  for (const auto& p : level_curve(0.3448, 0.2, 200)) {
    EXPECT_NEAR(lyapunov_value({p.s, p.i}, 0.3448), 0.2, 1e-12);
    EXPECT_GE(p.i, 0.0);
    EXPECT_LE(p.s + p.i, 1.0 + 1e-12);
  }
}

TEST(Phase, OpenLoopPointsShareOneLevel) {
  ScenarioConfig sc = parse_scenario("strategy = open_loop\n");
  sc.output_dir = scratch("phase_ol").string();
  const PhaseData d = phase_portrait_data(sc);
  std::ifstream in(fs::path(sc.output_dir) / "phase_trajectory.csv");
  std::string line;
  std::getline(in, line);
  double lo = 1e9, hi = -1e9;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string f;
    std::vector<double> v;
    while (std::getline(ls, f, ',')) v.push_back(std::stod(f));
    const double lv = lyapunov_value({v[1], v[2]}, sc.objective.s_star_target);
    lo = std::min(lo, lv);
    hi = std::max(hi, lv);
  }
  EXPECT_LT(hi - lo, 1e-4);
  EXPECT_FALSE(d.levels.empty());
}

TEST(Phase, LockdownThenReleaseShowsTwoWaves) {
  const ScenarioConfig sc = parse_scenario(
      "initial.s0 = 0.9\ninitial.i0 = 0.065\nsim.horizon = 600\nstrategy = custom\n"
      "schedule.segments = 0:300:0.9483\nphase.v_levels = 0, 0.2\n");
  ScenarioConfig local = sc;
  local.output_dir = scratch("phase_sw").string();
  const PhaseData d = phase_portrait_data(local);
  EXPECT_NEAR(d.report.s_inf, 0.13, 0.01);
  EXPECT_NEAR(d.report.trajectory.final_state().s, 0.13, 0.01);
}
