#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sirctl/scenario.hpp"

namespace {

struct Common {
  std::string config;
  std::string out;
  double dt = 0.0;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("config", c.config, "scenario config file")->required();
  cmd->add_option("--out", c.out, "output directory (overrides output.dir)");
  cmd->add_option("--dt", c.dt, "integration step in days (overrides sim.dt)")
      ->check(CLI::PositiveNumber);
}

sirctl::ScenarioConfig load(const Common& c) {
  sirctl::ScenarioConfig sc = sirctl::load_scenario(c.config);
  if (!c.out.empty()) sc.output_dir = c.out;
  if (c.dt > 0.0) {
    sc.dt = c.dt;
    sc.sync();
  }
  return sc;
}

void print_summary(const sirctl::StrategyReport& r) {
  std::cout << r.strategy << ": " << sirctl::status_of(r) << "  EFS=" << sirctl::fmt_num(r.efs)
            << "  IPP=" << sirctl::fmt_num(r.ipp) << "  SDI=" << sirctl::fmt_num(r.sdi) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SIR social-distancing design tool"};
  app.require_subcommand(1);

  Common run_opts, cmp_opts, phase_opts;
  std::vector<std::string> strategies;

  auto* run = app.add_subcommand("run", "run the configured strategy");
  add_common(run, run_opts);
  auto* cmp = app.add_subcommand("compare", "run several strategies and tabulate them");
  add_common(cmp, cmp_opts);
  cmp->add_option("--strategies", strategies, "comma separated strategy names")
      ->delimiter(',')
      ->required();
  auto* phase = app.add_subcommand("phase", "emit phase-portrait data");
  add_common(phase, phase_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : sirctl::kExitConfig;
  }

  try {
    if (*run) {
      const auto sc = load(run_opts);
      const auto outcome = sirctl::run_scenario(sc);
      if (outcome.report) print_summary(*outcome.report);
      else std::cerr << "error: " << outcome.error << '\n';
      return outcome.exit_code;
    }
    if (*cmp) {
      std::erase_if(strategies, [](const std::string& s) { return s.empty(); });
      if (strategies.empty()) {
        std::cerr << "usage: sirctl compare <config> --strategies a,b,c\n";
        return sirctl::kExitConfig;
      }
      const auto sc = load(cmp_opts);
      const auto table = sirctl::compare(sc, strategies);
      sirctl::write_comparison_text(std::cout, table);
      return table.any_failed() ? sirctl::kExitInfeasible : sirctl::kExitOk;
    }
    if (*phase) {
      const auto sc = load(phase_opts);
      const auto data = sirctl::phase_portrait_data(sc);
      print_summary(data.report);
      return sirctl::kExitOk;
    }
  } catch (const sirctl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return sirctl::kExitConfig;
  } catch (const sirctl::Infeasible& e) {
    std::cerr << "infeasible: " << e.what() << '\n';
    return sirctl::kExitInfeasible;
  } catch (const sirctl::NotConverged& e) {
    std::cerr << "not converged: " << e.what() << '\n';
    return sirctl::kExitInfeasible;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return sirctl::kExitConfig;
  }
  return sirctl::kExitConfig;
}
