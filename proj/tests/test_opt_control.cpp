#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "sirctl/opt_control.hpp"

using namespace sirctl;

namespace {

const ModelParams kBench{};
const EpidemiologicalObjective kObj = EpidemiologicalObjective::herd(kBench, 0.1);

// The full benchmark solve is shared by the checks below; it takes about a minute.
class POptBenchmark : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    OptConfig cfg;
    cfg.report_horizon = 300.0;
    report_ = new StrategyReport(solve_p_opt(kBench, cfg));
    wms_ = new StrategyReport(wms(kBench, kObj));
  }
  static void TearDownTestSuite() {
    delete report_;
    delete wms_;
  }
  static StrategyReport* report_;
  static StrategyReport* wms_;
};
StrategyReport* POptBenchmark::report_ = nullptr;
StrategyReport* POptBenchmark::wms_ = nullptr;

}  // namespace

TEST_F(POptBenchmark, FeasibleAndCheaperThanWms) {
  const StrategyReport& r = *report_;
  EXPECT_TRUE(r.feasible);
  EXPECT_LE(*r.value("max_i_on_horizon"), 0.1 + 1e-3);
  EXPECT_LE(std::abs(*r.value("s_at_T") - kObj.s_star_target), 1e-3);
  EXPECT_LT(r.sdi, wms_->sdi);
  EXPECT_LE(r.sdi, *r.value("warm_start_sdi") + 1e-6);
  EXPECT_LE(r.sdi, 202.0);
  EXPECT_NEAR(r.efs_horizon, 0.6725, 0.01);
}

TEST_F(POptBenchmark, PeakConstraintIsActive) {
  const double m = *report_->value("max_i_on_horizon");
  EXPECT_GE(m, 0.1 - 1e-3);
  EXPECT_LE(m, 0.1 + 1e-3);
}

TEST_F(POptBenchmark, PeakRidingPrecedesTerminalSteering) {
  double last_at_cap = -1.0, last_distancing = -1.0;
  for (const auto& s : report_->trajectory.samples) {
    if (s.t > 270.0) break;
    if (std::abs(s.i - 0.1) <= 1e-3) last_at_cap = s.t;
    if (s.r < kBench.r_bar - 1e-3) last_distancing = s.t;
  }
  ASSERT_GE(last_at_cap, 0.0);
  EXPECT_LT(last_at_cap, last_distancing);
}

TEST_F(POptBenchmark, ScheduleWithinBoundsAndEndsByHorizon) {
  EXPECT_LE(report_->schedule.end_time(), 270.0 + 1e-9);
  for (const auto& seg : report_->schedule.segments()) {
    const double r = std::get<ConstantLaw>(seg.law).r;
    EXPECT_GE(r, kBench.r_min - 1e-12);
    EXPECT_LE(r, kBench.r_bar + 1e-12);
  }
}

TEST(POpt, SlackConstraintsGiveOpenLoop) {
  OptConfig cfg;
  cfg.i_max = 0.3;
  cfg.s_star_target = s_infinity(kBench.r_bar, kBench.initial_state().s, kBench.initial_state().i).s_inf;
  const StrategyReport r = solve_p_opt(kBench, cfg);
  EXPECT_TRUE(r.schedule.empty());
  EXPECT_EQ(r.sdi, 0.0);
  EXPECT_TRUE(r.feasible);
}

TEST(POpt, NoWarmStartMeansNoFeasiblePoint) {
  OptConfig cfg;
  cfg.i_max = 0.3;  // the warm start needs I to reach the cap
  try {
    solve_p_opt(kBench, cfg);
    FAIL() << "expected Infeasible";
  } catch (const Infeasible& e) {
    EXPECT_NE(std::string(e.what()).find("no feasible point found"), std::string::npos);
  }
}

TEST(POpt, ReportsNonConvergence) {
  OptConfig cfg;
  cfg.n_intervals = 27;
  cfg.max_outer_iters = 1;
  cfg.max_inner_iters = 1;
  cfg.terminal_tol = 1e-9;
  const StrategyReport r = solve_p_opt(kBench, cfg);
  bool flagged = false;
  for (const auto& n : r.notes) flagged |= n.find("not converged") != std::string::npos;
  EXPECT_TRUE(flagged);
  EXPECT_FALSE(r.feasible);
}

TEST(POpt, DeterministicOnCoarseGrid) {
  OptConfig cfg;
  cfg.n_intervals = 27;
  cfg.max_inner_iters = 40;
  cfg.max_outer_iters = 3;
  cfg.threads = 3;
  const StrategyReport a = solve_p_opt(kBench, cfg);
  cfg.threads = 1;
  const StrategyReport b = solve_p_opt(kBench, cfg);
  ASSERT_EQ(a.schedule.segments().size(), b.schedule.segments().size());
  for (std::size_t k = 0; k < a.schedule.segments().size(); ++k)
    EXPECT_EQ(std::get<ConstantLaw>(a.schedule.segments()[k].law).r,
              std::get<ConstantLaw>(b.schedule.segments()[k].law).r);
  EXPECT_EQ(a.sdi, b.sdi);
}

TEST(OptConfigTest, Validation) {
  OptConfig cfg;
  cfg.n_intervals = 0;
  EXPECT_THROW(cfg.validate(), DomainError);
  cfg = {};
  cfg.penalties = {10.0, 1.0};
  EXPECT_THROW(cfg.validate(), DomainError);
  QuantizedConfig q;
  q.levels = {0.5, 2.9};
  EXPECT_THROW(q.validate(kBench), DomainError);
  WeightedConfig w;
  w.alpha_r = -1.0;
  EXPECT_THROW(w.validate(), DomainError);
}

TEST(Weighted, DistancingOnlyObjectiveGivesOpenLoop) {
  WeightedConfig cfg;
  cfg.alpha_i = 0.0;
  cfg.alpha_r = 1.0;
  const StrategyReport r = solve_weighted(kBench, cfg, kObj);
  EXPECT_NEAR(r.sdi, 0.0, 1e-9);
  for (const auto& seg : r.schedule.segments())
    EXPECT_DOUBLE_EQ(std::get<ConstantLaw>(seg.law).r, kBench.r_bar);
}

TEST(Weighted, NeverMeetsBothObjectives) {
  for (double ar : {0.20, 0.25, 0.30, 0.35, 0.40}) {
    WeightedConfig cfg;
    cfg.alpha_i = 1.0;
    cfg.alpha_r = ar;
    const StrategyReport r = solve_weighted(kBench, cfg, kObj);
    const bool both = r.ipp <= 0.101 && std::abs(r.s_inf - kObj.s_star_target) <= 0.01;
    EXPECT_FALSE(both) << ar;
  }
}

TEST(Quantized, BenchmarkWithinTolerance) {
  const StrategyReport r = solve_quantized(kBench, QuantizedConfig{}, kObj);
  EXPECT_TRUE(r.feasible);
  EXPECT_LE(r.ipp, 0.101);
  EXPECT_LE(r.sdi, 215.0);
}

TEST(Quantized, SwitchTimesOnDwellGridAndLevelsFromSet) {
  const QuantizedConfig cfg;
  const StrategyReport r = solve_quantized(kBench, cfg, kObj);
  for (const auto& seg : r.schedule.segments()) {
    const double q = seg.t_start / cfg.dwell_min;
    EXPECT_EQ(q, std::round(q));
    const double level = std::get<ConstantLaw>(seg.law).r;
    EXPECT_NE(std::find(cfg.levels.begin(), cfg.levels.end(), level), cfg.levels.end());
  }
  EXPECT_DOUBLE_EQ(r.schedule.end_time(), cfg.t_horizon);
}

TEST(Quantized, OnlyTheUncontrolledLevelIsInfeasible) {
  QuantizedConfig cfg;
  cfg.levels = {kBench.r_bar};
  EXPECT_THROW(solve_quantized(kBench, cfg, kObj), Infeasible);
}

TEST(Quantized, SingleSlotMatchesEnumeration) {
  QuantizedConfig cfg;
  cfg.dwell_min = cfg.t_horizon;
  cfg.terminal_tol = 0.6;
  const EpidemiologicalObjective obj{herd_immunity(kBench.r_bar), 0.15};

  // Oracle: simulate every level over the whole horizon.
  double best = std::numeric_limits<double>::infinity(), best_level = 0.0;
  for (double level : cfg.levels) {
    ControlSchedule s;
    s.add_constant(0.0, cfg.t_horizon, level);
    const Trajectory tr = simulate(kBench, s, kBench.initial_state(), cfg.t_horizon, cfg.dt);
    if (tr.max_i() > obj.i_max) continue;
    if (std::abs(tr.final_state().s - obj.s_star_target) > cfg.terminal_tol) continue;
    const double cost = (kBench.r_bar - level) * cfg.t_horizon;
    if (cost < best) best = cost, best_level = level;
  }
  ASSERT_TRUE(std::isfinite(best));
  const StrategyReport r = solve_quantized(kBench, cfg, obj);
  ASSERT_EQ(r.schedule.segments().size(), 1u);
  EXPECT_DOUBLE_EQ(std::get<ConstantLaw>(r.schedule.segments()[0].law).r, best_level);
  EXPECT_NEAR(r.sdi, best, 1e-9);
}

TEST(Quantized, Deterministic) {
  QuantizedConfig cfg;
  cfg.threads = 3;
  const StrategyReport a = solve_quantized(kBench, cfg, kObj);
  cfg.threads = 1;
  const StrategyReport b = solve_quantized(kBench, cfg, kObj);
  ASSERT_EQ(a.schedule.segments().size(), b.schedule.segments().size());
  for (std::size_t k = 0; k < a.schedule.segments().size(); ++k)
    EXPECT_EQ(std::get<ConstantLaw>(a.schedule.segments()[k].law).r,
              std::get<ConstantLaw>(b.schedule.segments()[k].law).r);
  EXPECT_EQ(a.sdi, b.sdi);
}
