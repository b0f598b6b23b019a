// Command-line front end: one subcommand per pipeline phase plus report.
// Exit codes: 0 success, 1 configuration or usage error, 2 phase failure.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "a2d/config.hpp"
#include "a2d/experiment.hpp"

namespace {

namespace fs = std::filesystem;
namespace ex = a2d::experiment;
using a2d::config::ConfigError;
using a2d::config::RunConfig;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string mode;
  std::string out;
  std::vector<std::string> overrides;
  bool force = false;
  bool resume = false;
  bool quiet = false;
};

void add_common(CLI::App* sub, CommonFlags& f) {
  sub->add_option("--config", f.config, "TOML-style configuration file");
  sub->add_option("--seed", f.seed, "master seed (overrides run.seed)");
  sub->add_option("--mode", f.mode, "training mode, e.g. a2d, grpo, a2d+no_diversity");
  sub->add_option("--out", f.out, "run directory (overrides run.out)");
  sub->add_option("--set", f.overrides, "override one key, e.g. --set rlvr.steps=100");
  sub->add_flag("--force", f.force, "redo finished work, discarding it");
  sub->add_flag("--resume", f.resume, "skip finished work");
  sub->add_flag("--quiet", f.quiet, "no progress output");
}

/// File values first, then --set, then the dedicated flags. Without --config
/// an existing run's config.toml is picked up so single phases need only --out.
RunConfig build_config(const CommonFlags& f) {
  if (f.force && f.resume) throw ConfigError("--force and --resume are mutually exclusive");
  a2d::config::RawTable raw;
  if (!f.config.empty()) {
    raw = a2d::config::parse_file(f.config);
  } else if (!f.out.empty() && fs::exists(fs::path(f.out) / "config.toml")) {
    raw = a2d::config::parse_file((fs::path(f.out) / "config.toml").string());
  }
  RunConfig cfg = a2d::config::from_table(raw);
  std::string text;
  for (const auto& o : f.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + o + "'");
    const std::string key = o.substr(0, eq);
    const auto dot = key.rfind('.');
    if (dot == std::string::npos) throw ConfigError("--set key must be section.name, got '" + key + "'");
    text += "[" + key.substr(0, dot) + "]\n" + key.substr(dot + 1) + " = " + o.substr(eq + 1) + "\n";
  }
  if (!text.empty()) cfg = a2d::config::from_table(a2d::config::parse_text(text, "--set"), cfg);
  if (f.seed) cfg.seed = *f.seed;
  if (!f.mode.empty()) cfg.mode_text = f.mode;
  if (!f.out.empty()) cfg.out = f.out;
  cfg.validate();
  return cfg;
}

ex::Options options_of(const CommonFlags& f) {
  ex::Options o;
  o.force = f.force;
  o.resume = f.resume;
  o.log_every = f.quiet ? 0 : 50;
  return o;
}

int run_phase(const CommonFlags& f, const std::string& phase) {
  ex::Run run(build_config(f), options_of(f));
  if (phase == "gen-data") run.create();
  else run.open();
  run.run_phase(phase);
  return 0;
}

int run_pipeline(const CommonFlags& f) {
  ex::Run run(build_config(f), options_of(f));
  run.create();
  run.pipeline();
  if (!f.quiet) std::cerr << "run complete: " << run.dir().root.string() << "\n";
  return 0;
}

int run_report(const std::vector<std::string>& runs, const std::string& out, bool plots) {
  std::vector<fs::path> dirs(runs.begin(), runs.end());
  const auto rep = ex::build_report(dirs, plots);
  if (out.empty()) {
    std::cout << rep.csv;
    return 0;
  }
  const fs::path dir(out);
  ex::write_atomic(dir / "report.csv", rep.csv);
  for (const auto& [name, svg] : rep.svgs) ex::write_atomic(dir / name, svg);
  std::cerr << "wrote " << (dir / "report.csv").string() << " and " << rep.svgs.size() << " plot(s)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compositional arithmetic RLVR experiments"};
  app.require_subcommand(1);
  CommonFlags flags;

  std::vector<std::pair<std::string, std::string>> phases{
      {"gen-data", "generate the train and held-out task suites"},
      {"pretrain", "warm up the backbone policy"},
      {"train-decomposer", "train the decomposer with RL"},
      {"annotate", "annotate the task suites with sub-questions"},
      {"train-reasoner", "train the reasoner with RL"},
      {"eval", "evaluate pass@k on the held-out suite"},
  };
  std::vector<CLI::App*> phase_cmds;
  for (const auto& [name, help] : phases) {
    auto* sub = app.add_subcommand(name, help);
    add_common(sub, flags);
    phase_cmds.push_back(sub);
  }
  auto* pipeline = app.add_subcommand("pipeline", "run every phase in order");
  add_common(pipeline, flags);

  std::vector<std::string> report_runs;
  std::string report_out;
  bool report_plots = false;
  auto* report = app.add_subcommand("report", "compare finished runs");
  report->add_option("runs", report_runs, "run directories")->required();
  report->add_option("--out", report_out, "directory for report.csv and plots (stdout if omitted)");
  report->add_flag("--plots", report_plots, "also write SVG plots");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (pipeline->parsed()) return run_pipeline(flags);
    if (report->parsed()) return run_report(report_runs, report_out, report_plots);
    for (std::size_t i = 0; i < phases.size(); ++i)
      if (phase_cmds[i]->parsed()) return run_phase(flags, phases[i].first);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const ex::PhaseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
