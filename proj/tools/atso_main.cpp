// atso: command line front end for data generation, runs, sweeps and reports.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "atso/error.hpp"
#include "atso/experiment.hpp"
#include "atso/mask_io.hpp"
#include "atso/noise_analysis.hpp"
#include "atso/report.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kRuntime = 2;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool sequential = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config, "experiment config (JSON)")->required();
  cmd->add_option("-s,--seed", c.seed, "override the config seed");
  cmd->add_option("-o,--out", c.out, "output directory (default: config output_dir)");
  cmd->add_flag("--sequential", c.sequential, "train ATSO subset students one after the other");
}

atso::ExperimentConfig load(const Common& c, std::optional<atso::ExperimentKind> force = {}) {
  atso::ExperimentConfig cfg = atso::parse_config(c.config);
  if (force) {
    cfg.experiment = *force;
    if (*force == atso::ExperimentKind::reduced && !cfg.class_mapping) {
      throw atso::ValidationError("class_mapping", "the reduced experiment needs a class mapping");
    }
  }
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.sweep.base_seed = *c.seed;
  }
  if (!c.out.empty()) cfg.output_dir = c.out;
  if (c.sequential) cfg.hyper.concurrent = false;
  return cfg;
}

void write_layouts(const atso::RunReportBundle& bundle, const atso::ExperimentConfig& cfg) {
  for (const auto& layout : cfg.layouts) {
    if (layout == "table1" && bundle.modes.empty()) continue;
    if (layout == "appendixA" &&
        std::find(bundle.modes.begin(), bundle.modes.end(), atso::Mode::atso) == bundle.modes.end()) {
      continue;
    }
    if (layout == "table3" && bundle.reduced.empty()) continue;
    for (const auto& p : atso::render_report(bundle, layout, cfg.output_dir)) {
      std::cout << "wrote " << p.string() << "\n";
    }
  }
}

void print_summary(const atso::RunReportBundle& bundle) {
  if (!bundle.modes.empty()) {
    std::cout << atso::render_layout(bundle, "table1");
  } else if (!bundle.reduced.empty()) {
    std::cout << atso::render_layout(bundle, "table3");
  }
  for (const auto& r : bundle.runs) {
    if (!r.audit.ok()) {
      std::cerr << "audit failed for " << atso::to_string(r.mode) << " seed " << r.seed << "\n";
      for (const auto& m : r.audit.messages) std::cerr << "  " << m << "\n";
    }
  }
}

int cmd_gen(const Common& c) {
  const auto cfg = load(c);
  const auto data = atso::build_data(cfg, cfg.seed);
  if (data.source) {
    std::cout << "wrote " << atso::save_bundle(*data.source, cfg.output_dir / "source").string() << "\n";
    std::cout << "wrote " << atso::save_bundle(data.target, cfg.output_dir / "target").string() << "\n";
  } else {
    std::cout << "wrote " << atso::save_bundle(data.target, cfg.output_dir).string() << "\n";
  }
  return kOk;
}

int cmd_run(const Common& c, std::optional<atso::ExperimentKind> force) {
  const auto cfg = load(c, force);
  const auto bundle = atso::run_experiment(cfg, cfg.seed);
  for (const auto& r : bundle.runs) r.save(cfg.output_dir / atso::to_string(r.mode));
  for (const auto& r : bundle.reduced) {
    std::filesystem::create_directories(cfg.output_dir / "reduced");
    std::ofstream(cfg.output_dir / "reduced" / "report.json") << r.to_json();
  }
  write_layouts(bundle, cfg);
  print_summary(bundle);
  for (const auto& r : bundle.runs) {
    if (!r.audit.ok()) return kRuntime;
  }
  return kOk;
}

int cmd_sweep(const Common& c) {
  const auto cfg = load(c);
  const auto bundle = atso::sweep(cfg, cfg.output_dir / "runs",
                                  [](std::uint64_t seed, const atso::RunReportBundle&) {
                                    std::cerr << "seed " << seed << " done\n";
                                  });
  write_layouts(bundle, cfg);
  print_summary(bundle);
  return kOk;
}

int cmd_report(const std::string& bundle_path, const std::vector<std::string>& layouts,
               const std::string& out) {
  const auto bundle = atso::load_bundle_json(bundle_path);
  const std::filesystem::path dir =
      out.empty() ? std::filesystem::path(bundle_path).parent_path() : std::filesystem::path(out);
  for (const auto& layout : layouts) {
    for (const auto& p : atso::render_report(bundle, layout, dir)) {
      std::cout << "wrote " << p.string() << "\n";
    }
  }
  return kOk;
}

int cmd_simulate(const std::string& config, std::optional<std::size_t> trials, std::uint64_t seed,
                 const std::string& out) {
  atso::PropagationSpec base;
  if (!config.empty()) base = atso::parse_config(config).propagation;
  if (trials) base.trials = *trials;
  std::vector<atso::PropagationResult> results;
  for (auto regime : {atso::Regime::continual, atso::Regime::scratch, atso::Regime::cross_subset}) {
    atso::PropagationSpec s = base;
    s.regime = regime;
    results.push_back(atso::simulate_error_propagation(s, seed));
  }
  const std::filesystem::path dir = out.empty() ? std::filesystem::path("atso-out") : std::filesystem::path(out);
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "propagation.csv") << atso::propagation_csv(results);
  std::ofstream(dir / "propagation_summary.json") << atso::propagation_summary_json(results);
  for (const auto& r : results) {
    std::printf("%-13s final bias %.4f +- %.4f\n", atso::to_string(r.spec.regime), r.final_mean(),
                r.final_ci95());
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Asynchronous teacher-student optimization experiments"};
  app.set_version_flag("--version", atso::version());
  app.require_subcommand(1);

  Common gen, run, transfer, reduced, sweep;
  add_common(app.add_subcommand("gen", "generate and save the data of a config"), gen);
  add_common(app.add_subcommand("run", "run the configured modes for one seed"), run);
  add_common(app.add_subcommand("transfer", "run the configured modes on shifted target data"),
             transfer);
  add_common(app.add_subcommand("reduced", "run the reduced-class staged protocol"), reduced);
  add_common(app.add_subcommand("sweep", "run every mode over sweep.num_seeds seeds"), sweep);

  std::string bundle_path, report_out;
  std::vector<std::string> layouts{"table1"};
  auto* report = app.add_subcommand("report", "render layouts from a saved bundle.json");
  report->add_option("-b,--bundle", bundle_path, "bundle.json from a run or sweep")->required();
  report->add_option("-l,--layout", layouts, "table1|appendixA|table3|csv|json");
  report->add_option("-o,--out", report_out, "output directory (default: next to the bundle)");

  std::string sim_config, sim_out;
  std::optional<std::size_t> sim_trials;
  std::uint64_t sim_seed = 0;
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo bias propagation for all regimes");
  simulate->add_option("-c,--config", sim_config, "config whose propagation block is used");
  simulate->add_option("-t,--trials", sim_trials, "override the trial count");
  simulate->add_option("-s,--seed", sim_seed, "simulation seed");
  simulate->add_option("-o,--out", sim_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  try {
    const std::string verb = app.get_subcommands().front()->get_name();
    if (verb == "gen") return cmd_gen(gen);
    if (verb == "run") return cmd_run(run, std::nullopt);
    if (verb == "transfer") return cmd_run(transfer, atso::ExperimentKind::transfer);
    if (verb == "reduced") return cmd_run(reduced, atso::ExperimentKind::reduced);
    if (verb == "sweep") return cmd_sweep(sweep);
    if (verb == "report") return cmd_report(bundle_path, layouts, report_out);
    if (verb == "simulate") return cmd_simulate(sim_config, sim_trials, sim_seed, sim_out);
  } catch (const atso::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kRuntime;
}
