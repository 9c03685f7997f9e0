// Command-line front end: validate, estimate and simulate.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data validation
// failure, 3 estimation failure.

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "attrition/cli.hpp"
#include "attrition/errors.hpp"

namespace {

namespace cli = attrition::cli;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitEstimation = 3;

// Flags are kept as text and applied through JobConfig::set, so the config
// file and the command line share one parser.
struct FlagValues {
  std::string config;
  std::map<std::string, std::string> text;
  std::optional<bool> trim;

  cli::Settings settings() const {
    cli::Settings out(text.begin(), text.end());
    if (trim) out.emplace_back("trim", *trim ? "true" : "false");
    return out;
  }
};

void add_common(CLI::App& sub, FlagValues& flags) {
  sub.add_option("--config", flags.config, "Flat key = value config file; flags override it");
  for (const auto& [name, help] : std::initializer_list<std::pair<const char*, const char*>>{
           {"seed", "Base seed"},
           {"estimators", "Comma-separated statistic names (default: all)"},
           {"threads", "Worker threads (default: $CIC_ATTRITION_THREADS or hardware)"},
           {"out", "Output file (default: stdout)"},
           {"format", "json, csv or text"},
           {"verbosity", "0 quiet, 1 progress"}}) {
    sub.add_option_function<std::string>(
        std::string("--") + name, [&flags, key = std::string(name)](const std::string& v) {
          flags.text[key] = v;
        },
        help);
  }
}

void add_data(CLI::App& sub, FlagValues& flags) {
  for (const auto& [name, help] : std::initializer_list<std::pair<const char*, const char*>>{
           {"input", "CSV file with columns id, g, r, y0, y1 [, cluster]"},
           {"id-col", "Column holding the unit id"},
           {"g-col", "Column holding the treatment indicator"},
           {"r-col", "Column holding the response indicator"},
           {"y0-col", "Column holding the baseline outcome"},
           {"y1-col", "Column holding the follow-up outcome"},
           {"cluster-col", "Cluster column; enables cluster bootstrap"}}) {
    sub.add_option_function<std::string>(
        std::string("--") + name, [&flags, key = std::string(name)](const std::string& v) {
          flags.text[key] = v;
        },
        help);
  }
}

void add_estimation(CLI::App& sub, FlagValues& flags) {
  for (const auto& [name, help] : std::initializer_list<std::pair<const char*, const char*>>{
           {"bootstrap-draws", "Bootstrap replicates (0 disables)"},
           {"ci-level", "Confidence level of percentile intervals"},
           {"stratify", "Resample within arms (true/false)"}}) {
    sub.add_option_function<std::string>(
        std::string("--") + name, [&flags, key = std::string(name)](const std::string& v) {
          flags.text[key] = v;
        },
        help);
  }
  sub.add_flag_function(
      "--trim,!--no-trim", [&flags](std::int64_t count) { flags.trim = count > 0; },
      "Report trimmed IPW (IPW2) in the IPW columns (default) or only untrimmed IPW1");
}

void add_design(CLI::App& sub, FlagValues& flags) {
  for (const auto& [name, help] : std::initializer_list<std::pair<const char*, const char*>>{
           {"design", "Design preset: I, II or III"},
           {"n", "Sample size per replication"},
           {"sigma", "Scale of the time-varying shock"},
           {"beta2", "Treatment-effect heterogeneity"},
           {"reps", "Monte Carlo replications"},
           {"truth-mc-size", "Draws for the true-value oracle"},
           {"response", "symmetric or follow-up-only"},
           {"sample-out", "Also write replication 0 as a CSV data file"}}) {
    sub.add_option_function<std::string>(
        std::string("--") + name, [&flags, key = std::string(name)](const std::string& v) {
          flags.text[key] = v;
        },
        help);
  }
}

// Writes to --out or stdout.
template <typename Writer>
void emit(const cli::JobConfig& config, Writer&& write) {
  if (config.out.empty()) {
    write(std::cout);
    std::cout.flush();
    return;
  }
  std::ofstream out(config.out);
  if (!out) throw attrition::ConfigError("cannot write '" + config.out + "'");
  write(out);
}

int run_estimate(const cli::JobConfig& config) {
  const auto report = cli::run_estimate(config);
  emit(config, [&](std::ostream& os) {
    switch (config.format) {
      case cli::Format::kJson: os << cli::report_to_json(report) << '\n'; break;
      case cli::Format::kCsv: cli::write_report_csv(os, report); break;
      case cli::Format::kText: cli::write_report_text(os, report); break;
    }
  });
  if (report.all_failed()) {
    std::cerr << "error: no estimator could be computed on this sample\n";
    return kExitEstimation;
  }
  return kExitOk;
}

int run_simulate(const cli::JobConfig& config) {
  if (config.verbosity > 0) {
    std::cerr << "simulating design " << config.design << ", " << config.reps
              << " replications\n";
  }
  if (!config.sample_out.empty()) {
    attrition::save_csv(config.sample_out, attrition::draw_sample(cli::design_from_config(config), 0).sample);
  }
  const auto summary = cli::run_simulate(config);
  const auto provenance = cli::make_provenance(config);
  emit(config, [&](std::ostream& os) {
    switch (config.format) {
      case cli::Format::kJson: os << cli::simulation_to_json(summary, provenance) << '\n'; break;
      case cli::Format::kCsv: attrition::write_summary_csv(os, summary); break;
      case cli::Format::kText:
        attrition::write_summary_text(os, summary);
        os << "config " << provenance.config_hash << "  seed " << provenance.seed << "  version "
           << provenance.version << '\n';
        break;
    }
  });
  bool any = false;
  for (const auto& row : summary.rows) any = any || row.used > 0;
  if (!any) {
    std::cerr << "error: every replication failed for every estimator\n";
    return kExitEstimation;
  }
  for (const auto& row : summary.rows) {
    if (row.failures > 0) {
      std::cerr << "warning: " << row.estimand << ' ' << row.method << " failed in "
                << row.failures << " replications\n";
    }
  }
  return kExitOk;
}

int run_validate(const cli::JobConfig& config) {
  const auto report = cli::run_validate(config);
  emit(config, [&](std::ostream& os) {
    switch (config.format) {
      case cli::Format::kJson: os << cli::validation_to_json(report) << '\n'; break;
      case cli::Format::kCsv: cli::write_validation_csv(os, report); break;
      case cli::Format::kText: cli::write_validation_text(os, report); break;
    }
  });
  return report.valid() ? kExitOk : kExitData;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Changes-in-changes corrections for panel attrition"};
  app.set_version_flag("--version", std::string(cli::kVersion));
  app.require_subcommand(1);

  FlagValues estimate_flags;
  FlagValues simulate_flags;
  FlagValues validate_flags;

  auto* estimate = app.add_subcommand("estimate", "Estimate effects with bootstrap inference");
  add_common(*estimate, estimate_flags);
  add_data(*estimate, estimate_flags);
  add_estimation(*estimate, estimate_flags);

  auto* simulate = app.add_subcommand("simulate", "Run a Monte Carlo study on a design preset");
  add_common(*simulate, simulate_flags);
  add_design(*simulate, simulate_flags);
  simulate->add_flag_function(
      "--trim,!--no-trim", [&](std::int64_t count) { simulate_flags.trim = count > 0; },
      "Include trimmed IPW rows (default)");

  auto* validate = app.add_subcommand("validate", "Check an input file and report cell counts");
  add_common(*validate, validate_flags);
  add_data(*validate, validate_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  const auto dispatch = [&](cli::Mode mode, const FlagValues& flags, auto&& run) -> int {
    try {
      const auto file = flags.config.empty() ? cli::Settings{} : cli::load_settings(flags.config);
      const auto config = cli::resolve_config(mode, file, flags.settings());
      return run(config);
    } catch (const attrition::ConfigError& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kExitUsage;
    } catch (const attrition::DataError& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kExitData;
    } catch (const attrition::EstimationError& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kExitEstimation;
    }
  };

  if (estimate->parsed()) return dispatch(cli::Mode::kEstimate, estimate_flags, run_estimate);
  if (simulate->parsed()) return dispatch(cli::Mode::kSimulate, simulate_flags, run_simulate);
  return dispatch(cli::Mode::kValidate, validate_flags, run_validate);
}
