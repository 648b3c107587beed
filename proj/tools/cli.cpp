#include "cli.hpp"

#include <cstdlib>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ubalab/pipeline.hpp"

namespace ubalab::cli {

namespace {

struct GlobalFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string cache;
};

ExperimentConfig ResolveConfig(const GlobalFlags& flags) {
  ExperimentConfig cfg = flags.config.empty() ? ExperimentConfig{} : LoadConfig(flags.config);
  if (flags.seed) cfg.root_seed = *flags.seed;
  if (!flags.out.empty()) cfg.output_dir = flags.out;
  cfg.Validate();
  return cfg;
}

PipelineOptions ResolveOptions(const GlobalFlags& flags, std::ostream& err) {
  PipelineOptions opts;
  opts.log = &err;
  if (!flags.cache.empty()) {
    opts.cache_dir = flags.cache;
  } else if (const char* env = std::getenv("UBALAB_CACHE"); env && *env) {
    opts.cache_dir = env;
  }
  return opts;
}

}  // namespace

int RunCli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Target-user injection attack laboratory for collaborative filtering",
               "ubalab"};
  app.set_version_flag("--version", LibraryVersion());
  app.require_subcommand(1);
  app.fallthrough();

  GlobalFlags flags;
  app.add_option("--config", flags.config, "Experiment config (JSON)")
      ->check(CLI::ExistingFile);
  app.add_option("--seed", flags.seed, "Root seed, overrides the config");
  app.add_option("--out", flags.out, "Output directory, overrides the config");
  app.add_option("--cache", flags.cache,
                 "Uplift-table cache directory (default: $UBALAB_CACHE, then <out>/cache)");

  bool print_defaults = false;
  auto* prepare = app.add_subcommand("prepare", "Ingest, filter and select targets");
  prepare->add_flag("--print-defaults", print_defaults, "Print the default config and exit");
  auto* estimate = app.add_subcommand("estimate", "Build or load the uplift tables");
  auto* allocate = app.add_subcommand("allocate", "Allocate the fake-user budget");
  auto* attack = app.add_subcommand("attack", "Generate fake users and evaluate victims");
  auto* defend = app.add_subcommand("defend", "Run detectors and re-evaluate");
  std::vector<int> orders;
  auto* correlate =
      app.add_subcommand("correlate", "Correlation of walk counts with model scores");
  correlate->add_option("--order", orders, "Walk order(s): 1, 3, 5 or 7");
  std::vector<std::string> runs;
  auto* report = app.add_subcommand("report", "Average and compare run reports");
  report->add_option("runs", runs, "Additional run directories to compare");
  auto* run = app.add_subcommand("run", "Full pipeline");

  // CLI11 reports through exceptions; map them onto our exit codes.
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << LibraryVersion() << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (prepare->parsed() && print_defaults) {
      out << ConfigToJson(ExperimentConfig{}).dump(2) << '\n';
      return kExitOk;
    }
    const auto cfg = ResolveConfig(flags);
    Pipeline pipeline(cfg, ResolveOptions(flags, err));
    if (prepare->parsed()) {
      pipeline.Prepare();
    } else if (estimate->parsed()) {
      pipeline.Estimate();
    } else if (allocate->parsed()) {
      pipeline.Allocate();
    } else if (attack->parsed()) {
      pipeline.Attack();
    } else if (defend->parsed()) {
      pipeline.Defend();
    } else if (correlate->parsed()) {
      pipeline.Correlate(orders);
      const auto manifest = ReadManifest(cfg.output_dir);
      if (const auto* stage = manifest.Find("correlate"))
        for (const auto& [key, value] : stage->notes) out << key << '=' << value << '\n';
    } else if (report->parsed()) {
      RunResult result;
      if (runs.empty()) {
        result = pipeline.Report();
      } else {
        std::vector<std::string> dirs{cfg.output_dir};
        dirs.insert(dirs.end(), runs.begin(), runs.end());
        result = ReportRuns(dirs);
      }
      result.comparison.WriteSummary(out);
    } else if (run->parsed()) {
      pipeline.Run().comparison.WriteSummary(out);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace ubalab::cli
