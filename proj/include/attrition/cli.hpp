#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "attrition/inference.hpp"
#include "attrition/panel_data.hpp"
#include "attrition/simulation.hpp"

namespace attrition::cli {

inline constexpr std::string_view kVersion = "1.0.0";
/// Environment variable holding the default worker-thread count.
inline constexpr const char* kThreadsEnv = "CIC_ATTRITION_THREADS";

enum class Mode { kEstimate, kSimulate, kValidate };
enum class Format { kJson, kCsv, kText };

std::string_view to_string(Mode m);
std::string_view to_string(Format f);

using Settings = std::vector<std::pair<std::string, std::string>>;

struct JobConfig {
  Mode mode = Mode::kEstimate;

  // estimate / validate
  std::string input;
  CsvSchema schema;
  /// Set by cluster-col: resample whole clusters in the bootstrap.
  bool cluster_bootstrap = false;

  // simulate
  std::string design = "I";
  std::size_t n = 2000;
  double sigma = 2.0;
  double beta2 = 0.0;
  ResponseRule response = ResponseRule::kSymmetric;
  std::size_t reps = 1000;
  std::size_t truth_mc_size = 1'000'000;
  /// When set, replication 0 of the design is also written here as CSV.
  std::string sample_out;

  std::uint64_t seed = 20240601;
  /// 0 disables the bootstrap (point estimates only).
  std::size_t bootstrap_draws = 999;
  double ci_level = 0.95;
  bool stratify = false;
  /// Also compute the trimmed IPW variant and use it for the IPW columns.
  bool trim = true;
  /// Statistic names to compute; empty selects everything.
  std::vector<std::string> estimators;
  unsigned threads = 0;

  std::string out;
  Format format = Format::kText;
  int verbosity = 0;

  /// Applies one setting by its flag name without dashes ("bootstrap-draws",
  /// "cluster-col", ...). Throws ConfigError for unknown keys or bad values.
  void set(std::string_view key, std::string_view value);
  /// Mode-specific required fields; throws ConfigError.
  void validate() const;
  /// Every setting that can change results, sorted by key. Output location,
  /// format, verbosity and thread count are excluded.
  Settings canonical() const;
  /// FNV-1a 64-bit hash of canonical(), as 16 hex digits.
  std::string hash() const;
};

/// Flat `key = value` text; `#` starts a comment. Throws ConfigError on a
/// line without '='.
Settings parse_settings(std::istream& in);
Settings load_settings(const std::filesystem::path& path);

/// Defaults, then the config file, then flags (flags win).
JobConfig resolve_config(Mode mode, const Settings& file, const Settings& flags);

/// Thread count from the environment, 0 (hardware) when unset. Throws
/// ConfigError for a malformed value.
unsigned threads_from_env();

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t state = 0xcbf29ce484222325ULL);

struct Provenance {
  std::string version;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string normal_algorithm;
  std::optional<std::string> input_hash;
  Settings config;
};

Provenance make_provenance(const JobConfig& config,
                           std::optional<std::string> input_hash = std::nullopt);

// ---------------------------------------------------------------------------
// estimate

struct ReportEntry {
  std::string key;     // statistic name, e.g. "ipw2_ate"
  std::string column;  // panel column "(1)".."(8)" or empty
  std::string estimand;
  std::string method;
  std::string route;
  std::optional<double> point;
  std::optional<double> se;
  std::optional<double> ci_lo;
  std::optional<double> ci_hi;
  std::size_t draws_used = 0;
  std::size_t failures = 0;
  CellCounts n_used{};
  bool support_warning = false;
  double clamp_fraction = 0.0;
  std::size_t n_trimmed = 0;
  std::vector<std::string> notes;
  /// Why the point or its standard error is missing.
  std::optional<std::string> error;
};

struct DifferenceEntry {
  std::string label;  // e.g. "(2)-(5)"
  std::string first;  // statistic names
  std::string second;
  std::optional<double> point;
  std::optional<double> se;
  std::optional<double> ci_lo;
  std::optional<double> ci_hi;
  std::optional<std::string> error;
};

struct DiagnosticReport {
  std::array<double, 2> statistic{};
  std::optional<std::array<double, 2>> pvalue;
  std::optional<double> joint_pvalue;
  std::size_t draws_used = 0;
  std::optional<std::string> error;
};

struct EstimateReport {
  std::string input;
  AttritionSummary attrition;
  std::vector<ReportEntry> estimates;
  std::vector<DifferenceEntry> differences;
  DiagnosticReport diagnostic;
  Provenance provenance;

  /// True when no treatment-effect estimate has a point value.
  bool all_failed() const;
  const ReportEntry* find(std::string_view key) const;
};

/// Statistic keys computed by estimate, in report order.
std::vector<std::string> estimate_keys();

/// Loads config.input and runs estimate_sample. Throws DataError when the
/// input cannot be loaded.
EstimateReport run_estimate(const JobConfig& config);
EstimateReport estimate_sample(const PanelSample& sample, const JobConfig& config);

std::string report_to_json(const EstimateReport& report, int indent = 2);
void write_report_csv(std::ostream& out, const EstimateReport& report);
void write_report_text(std::ostream& out, const EstimateReport& report);

// ---------------------------------------------------------------------------
// simulate

SimDesign design_from_config(const JobConfig& config);
/// Maps statistic names onto Monte Carlo estimators; trim=false drops IPW2.
std::vector<McEstimator> mc_estimators_from_config(const JobConfig& config);
McSummary run_simulate(const JobConfig& config);
std::string simulation_to_json(const McSummary& summary, const Provenance& provenance,
                               int indent = 2);

// ---------------------------------------------------------------------------
// validate

struct SupportCheck {
  std::string assumption;  // e.g. "ATT-R support containment"
  std::string inner_cell;
  std::string outer_cell;
  std::array<double, 2> inner_range{};
  std::array<double, 2> outer_range{};
  bool contained = true;
  std::string message;
};

struct ValidationReport {
  std::string input;
  std::size_t rows = 0;
  std::vector<SchemaViolation> violations;
  std::optional<AttritionSummary> attrition;
  std::vector<SupportCheck> support;
  Provenance provenance;

  bool valid() const { return violations.empty(); }
};

/// Observed-range containment checks behind the respondent and attritor
/// imputations. Cells that are empty are skipped.
std::vector<SupportCheck> support_checks(const PanelSample& sample);

/// Throws DataError when the file cannot be opened.
ValidationReport run_validate(const JobConfig& config);
ValidationReport validate_stream(std::istream& in, const JobConfig& config);

std::string validation_to_json(const ValidationReport& report, int indent = 2);
void write_validation_csv(std::ostream& out, const ValidationReport& report);
void write_validation_text(std::ostream& out, const ValidationReport& report);

}  // namespace attrition::cli
