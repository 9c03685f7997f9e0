#include "attrition/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "json.hpp"

#include "attrition/cic_estimators.hpp"
#include "attrition/errors.hpp"
#include "attrition/ipw.hpp"
#include "attrition/rng.hpp"

namespace attrition::cli {

using nlohmann::ordered_json;

std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::kEstimate: return "estimate";
    case Mode::kSimulate: return "simulate";
    case Mode::kValidate: return "validate";
  }
  return "?";
}

std::string_view to_string(Format f) {
  switch (f) {
    case Format::kJson: return "json";
    case Format::kCsv: return "csv";
    case Format::kText: return "text";
  }
  return "?";
}

namespace {

std::string trimmed(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("invalid value '" + std::string(text) + "' for " + std::string(key));
  }
  return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError("invalid boolean '" + std::string(text) + "' for " + std::string(key));
}

std::string format_real(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto piece = trimmed(text.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                                : comma - start));
    if (!piece.empty()) out.push_back(piece);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

}  // namespace

void JobConfig::set(std::string_view key, std::string_view raw) {
  const std::string value = trimmed(raw);
  if (key == "input") {
    input = value;
  } else if (key == "id-col") {
    schema.id = value;
  } else if (key == "g-col") {
    schema.g = value;
  } else if (key == "r-col") {
    schema.r = value;
  } else if (key == "y0-col") {
    schema.y0 = value;
  } else if (key == "y1-col") {
    schema.y1 = value;
  } else if (key == "cluster-col") {
    schema.cluster = value;
    cluster_bootstrap = !value.empty();
  } else if (key == "design") {
    if (value != "I" && value != "II" && value != "III") {
      throw ConfigError("unknown design '" + value + "' (expected I, II or III)");
    }
    design = value;
  } else if (key == "n") {
    n = parse_number<std::size_t>(key, value);
  } else if (key == "sigma") {
    sigma = parse_number<double>(key, value);
  } else if (key == "beta2") {
    beta2 = parse_number<double>(key, value);
  } else if (key == "response") {
    if (value == "symmetric") {
      response = ResponseRule::kSymmetric;
    } else if (value == "follow-up-only") {
      response = ResponseRule::kFollowUpOnly;
    } else {
      throw ConfigError("unknown response rule '" + value + "' (expected symmetric or follow-up-only)");
    }
  } else if (key == "sample-out") {
    sample_out = value;
  } else if (key == "reps") {
    reps = parse_number<std::size_t>(key, value);
  } else if (key == "truth-mc-size") {
    truth_mc_size = parse_number<std::size_t>(key, value);
  } else if (key == "seed") {
    seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "bootstrap-draws") {
    bootstrap_draws = parse_number<std::size_t>(key, value);
  } else if (key == "ci-level") {
    ci_level = parse_number<double>(key, value);
  } else if (key == "stratify") {
    stratify = parse_bool(key, value);
  } else if (key == "trim") {
    trim = parse_bool(key, value);
  } else if (key == "estimators") {
    estimators = split_list(value);
  } else if (key == "threads") {
    threads = parse_number<unsigned>(key, value);
  } else if (key == "out") {
    out = value;
  } else if (key == "format") {
    if (value == "json") {
      format = Format::kJson;
    } else if (value == "csv") {
      format = Format::kCsv;
    } else if (value == "text") {
      format = Format::kText;
    } else {
      throw ConfigError("unknown format '" + value + "' (expected json, csv or text)");
    }
  } else if (key == "verbosity") {
    verbosity = parse_number<int>(key, value);
  } else {
    throw ConfigError("unknown setting '" + std::string(key) + "'");
  }
}

void JobConfig::validate() const {
  if ((mode == Mode::kEstimate || mode == Mode::kValidate) && input.empty()) {
    throw ConfigError(std::string(to_string(mode)) + " requires an input file");
  }
  if (mode == Mode::kSimulate) {
    if (n == 0) throw ConfigError("n must be positive");
    if (reps < 2) throw ConfigError("reps must be at least 2");
    if (truth_mc_size == 0) throw ConfigError("truth-mc-size must be positive");
  }
  if (bootstrap_draws == 1) throw ConfigError("bootstrap-draws must be 0 or at least 2");
  if (!(ci_level > 0.0 && ci_level < 1.0)) throw ConfigError("ci-level must lie in (0, 1)");
  const auto known = mode == Mode::kSimulate ? std::vector<std::string>{
                                                   "naive", "att_r", "atu_r", "ate_r", "ipw1_ate_r",
                                                   "ipw2_ate_r", "ate_ra", "ate_nora", "ipw1_ate",
                                                   "ipw2_ate"}
                                             : estimate_keys();
  for (const auto& e : estimators) {
    if (std::find(known.begin(), known.end(), e) == known.end()) {
      throw ConfigError("unknown estimator '" + e + "'");
    }
  }
}

Settings JobConfig::canonical() const {
  std::map<std::string, std::string> m;
  m["mode"] = std::string(to_string(mode));
  m["seed"] = std::to_string(seed);
  m["estimators"] = [&] {
    std::string s;
    for (const auto& e : estimators) s += (s.empty() ? "" : ",") + e;
    return s;
  }();
  m["trim"] = trim ? "true" : "false";
  if (mode == Mode::kSimulate) {
    m["design"] = design;
    m["n"] = std::to_string(n);
    m["sigma"] = format_real(sigma);
    m["beta2"] = format_real(beta2);
    m["response"] = response == ResponseRule::kSymmetric ? "symmetric" : "follow-up-only";
    m["reps"] = std::to_string(reps);
    m["truth-mc-size"] = std::to_string(truth_mc_size);
  } else {
    m["input"] = input;
    m["id-col"] = schema.id;
    m["g-col"] = schema.g;
    m["r-col"] = schema.r;
    m["y0-col"] = schema.y0;
    m["y1-col"] = schema.y1;
    m["cluster-col"] = cluster_bootstrap ? schema.cluster : "";
    m["bootstrap-draws"] = std::to_string(bootstrap_draws);
    m["ci-level"] = format_real(ci_level);
    m["stratify"] = stratify ? "true" : "false";
  }
  return {m.begin(), m.end()};
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t state) {
  for (unsigned char c : bytes) {
    state ^= c;
    state *= 0x100000001b3ULL;
  }
  return state;
}

std::string JobConfig::hash() const {
  std::uint64_t h = fnv1a("");
  for (const auto& [k, v] : canonical()) {
    h = fnv1a(k, h);
    h = fnv1a("=", h);
    h = fnv1a(v, h);
    h = fnv1a("\n", h);
  }
  return hex64(h);
}

Settings parse_settings(std::istream& in) {
  Settings out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto text = trimmed(line);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(number) + ": expected key = value");
    }
    out.emplace_back(trimmed(std::string_view(text).substr(0, eq)),
                     trimmed(std::string_view(text).substr(eq + 1)));
  }
  return out;
}

Settings load_settings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  return parse_settings(in);
}

unsigned threads_from_env() {
  const char* value = std::getenv(kThreadsEnv);
  if (value == nullptr || *value == '\0') return 0;
  return parse_number<unsigned>(kThreadsEnv, value);
}

JobConfig resolve_config(Mode mode, const Settings& file, const Settings& flags) {
  JobConfig config;
  config.mode = mode;
  config.threads = threads_from_env();
  for (const auto& [k, v] : file) config.set(k, v);
  for (const auto& [k, v] : flags) config.set(k, v);
  config.validate();
  return config;
}

Provenance make_provenance(const JobConfig& config, std::optional<std::string> input_hash) {
  Provenance p;
  p.version = std::string(kVersion);
  p.config_hash = config.hash();
  p.seed = config.seed;
  p.normal_algorithm = std::string(kNormalAlgorithm);
  p.input_hash = std::move(input_hash);
  p.config = config.canonical();
  return p;
}

namespace {

std::optional<std::string> hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream buf;
  buf << in.rdbuf();
  return hex64(fnv1a(buf.str()));
}

ordered_json provenance_json(const Provenance& p) {
  ordered_json config = ordered_json::object();
  for (const auto& [k, v] : p.config) config[k] = v;
  ordered_json j = {{"version", p.version},
                    {"config_hash", p.config_hash},
                    {"seed", p.seed},
                    {"normal_algorithm", p.normal_algorithm}};
  j["input_hash"] = p.input_hash ? ordered_json(*p.input_hash) : ordered_json(nullptr);
  j["config"] = config;
  return j;
}

template <typename T>
ordered_json opt(const std::optional<T>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

ordered_json counts_json(const CellCounts& c) {
  return {{"n00", c[cell_index(0, 0)]},
          {"n01", c[cell_index(0, 1)]},
          {"n10", c[cell_index(1, 0)]},
          {"n11", c[cell_index(1, 1)]}};
}

std::string cell_name(int g, int r) {
  return std::string(g == 1 ? "treated" : "control") + (r == 1 ? " respondents" : " attritors");
}

}  // namespace

// ---------------------------------------------------------------------------
// estimate

namespace {

struct EntrySpec {
  std::string key;
  std::optional<Estimand> estimand;
  Method method = Method::kCic;
};

const std::vector<EntrySpec>& entry_specs() {
  static const std::vector<EntrySpec> specs = {
      {"control_mean", std::nullopt, Method::kNaive},
      {"naive", Estimand::kNaiveDeltaR, Method::kNaive},
      {"att_r", Estimand::kAttR, Method::kCic},
      {"atu_r", Estimand::kAtuR, Method::kCic},
      {"ate_r", Estimand::kAteR, Method::kCic},
      {"ate_ra", Estimand::kAteRa, Method::kCic},
      {"ate_nora", Estimand::kAteNora, Method::kCic},
      {"att_a", Estimand::kAttA, Method::kCic},
      {"atu_a", Estimand::kAtuA, Method::kCic},
      {"ipw1_ate_r", Estimand::kAteR, Method::kIpwUntrimmed},
      {"ipw2_ate_r", Estimand::kAteR, Method::kIpwTrimmed},
      {"ipw1_ate", Estimand::kAte, Method::kIpwUntrimmed},
      {"ipw2_ate", Estimand::kAte, Method::kIpwTrimmed},
  };
  return specs;
}

std::string column_of(const std::string& key, bool trim) {
  static const std::map<std::string, std::string> fixed = {
      {"control_mean", "(1)"}, {"naive", "(2)"}, {"att_r", "(3)"},
      {"atu_r", "(4)"},        {"ate_r", "(5)"}, {"ate_ra", "(6)"}};
  if (const auto it = fixed.find(key); it != fixed.end()) return it->second;
  if (key == (trim ? "ipw2_ate_r" : "ipw1_ate_r")) return "(7)";
  if (key == (trim ? "ipw2_ate" : "ipw1_ate")) return "(8)";
  return {};
}

const std::vector<std::pair<std::string, std::string>>& difference_columns() {
  static const std::vector<std::pair<std::string, std::string>> d = {
      {"(2)", "(5)"}, {"(2)", "(6)"}, {"(5)", "(6)"}, {"(5)", "(7)"},
      {"(6)", "(8)"}, {"(2)", "(7)"}, {"(2)", "(8)"}};
  return d;
}

bool needs_cic(const std::string& key) {
  return key == "att_r" || key == "atu_r" || key == "ate_r" || key == "ate_ra" ||
         key == "ate_nora" || key == "att_a" || key == "atu_a";
}

bool needs_ipw(const std::string& key) { return key.rfind("ipw", 0) == 0; }

struct Computed {
  std::optional<EstimandValue> value;
  std::optional<std::string> error;
};

double control_respondent_mean(const PanelSample& sample) {
  const auto y = sample.subsample(0, 1, Field::kFollowUp);
  double sum = 0.0;
  for (double v : y) sum += v;
  return sum / static_cast<double>(y.size());
}

// All requested statistics on one sample, sharing the quantile maps and the
// propensity fits between estimators.
std::vector<Computed> compute_all(const PanelSample& sample, const std::vector<std::string>& keys) {
  std::vector<Computed> out(keys.size());
  std::optional<CicTransforms> transforms;
  std::optional<PropensityModels> models;
  std::optional<std::string> cic_error;
  std::optional<std::string> ipw_error;
  std::optional<NoRandomAssignmentResult> nora;
  const bool any_cic = std::any_of(keys.begin(), keys.end(), needs_cic);
  const bool any_ipw = std::any_of(keys.begin(), keys.end(), needs_ipw);
  if (any_cic) {
    try {
      transforms = CicTransforms::build(sample);
    } catch (const EstimationError& e) {
      cic_error = e.what();
    }
  }
  if (any_ipw) {
    try {
      models = fit_propensities(sample);
    } catch (const EstimationError& e) {
      ipw_error = e.what();
    }
  }
  for (std::size_t k = 0; k < keys.size(); ++k) {
    const auto& key = keys[k];
    auto& slot = out[k];
    if (needs_cic(key) && !transforms) {
      slot.error = cic_error;
      continue;
    }
    if (needs_ipw(key) && !models) {
      slot.error = ipw_error;
      continue;
    }
    try {
      if (key == "control_mean") {
        EstimandValue v;
        v.method = Method::kNaive;
        v.point = control_respondent_mean(sample);
        v.n_used = sample.counts();
        slot.value = v;
      } else if (key == "naive") {
        slot.value = naive_delta_r(sample);
      } else if (key == "att_r") {
        slot.value = att_r(sample, *transforms);
      } else if (key == "atu_r") {
        slot.value = atu_r(sample, *transforms);
      } else if (key == "ate_r") {
        slot.value = ate_r(sample, *transforms);
      } else if (key == "ate_ra") {
        slot.value = ate_random_assignment(sample, *transforms);
      } else if (key == "ate_nora" || key == "att_a" || key == "atu_a") {
        if (!nora) nora = ate_no_random_assignment(sample, *transforms);
        if (key == "ate_nora") {
          slot.value = nora->ate;
        } else {
          const auto& part = key == "att_a" ? nora->att_a : nora->atu_a;
          if (part) {
            slot.value = *part;
          } else {
            slot.error = std::string(key == "att_a" ? "treated" : "control") +
                         " arm has no attritors";
          }
        }
      } else if (key == "ipw1_ate_r") {
        slot.value = ipw_ate_r(sample, *models, std::nullopt);
      } else if (key == "ipw2_ate_r") {
        slot.value = ipw_ate_r(sample, *models, TrimRule{});
      } else if (key == "ipw1_ate") {
        slot.value = ipw_ate(sample, *models, std::nullopt);
      } else if (key == "ipw2_ate") {
        slot.value = ipw_ate(sample, *models, TrimRule{});
      }
    } catch (const EstimationError& e) {
      slot.error = e.what();
    }
  }
  return out;
}

std::vector<std::string> selected_keys(const JobConfig& config) {
  std::vector<std::string> keys;
  for (const auto& key : estimate_keys()) {
    const bool wanted = config.estimators.empty() || key == "naive" ||
                        std::find(config.estimators.begin(), config.estimators.end(), key) !=
                            config.estimators.end();
    if (!wanted) continue;
    if (!config.trim && key.rfind("ipw2", 0) == 0) continue;
    keys.push_back(key);
  }
  return keys;
}

}  // namespace

std::vector<std::string> estimate_keys() {
  std::vector<std::string> keys;
  for (const auto& s : entry_specs()) keys.push_back(s.key);
  return keys;
}

bool EstimateReport::all_failed() const {
  return std::none_of(estimates.begin(), estimates.end(), [](const ReportEntry& e) {
    return e.key != "control_mean" && e.point.has_value();
  });
}

const ReportEntry* EstimateReport::find(std::string_view key) const {
  for (const auto& e : estimates) {
    if (e.key == key) return &e;
  }
  return nullptr;
}

EstimateReport estimate_sample(const PanelSample& sample, const JobConfig& config) {
  EstimateReport report;
  report.input = config.input;
  report.attrition = attrition_summary(sample);

  const auto keys = selected_keys(config);
  const auto computed = compute_all(sample, keys);
  std::map<std::string, std::size_t> index_of_column;
  for (std::size_t k = 0; k < keys.size(); ++k) {
    const auto& spec = *std::find_if(entry_specs().begin(), entry_specs().end(),
                                     [&](const EntrySpec& s) { return s.key == keys[k]; });
    ReportEntry e;
    e.key = keys[k];
    e.column = column_of(keys[k], config.trim);
    if (!e.column.empty()) index_of_column[e.column] = k;
    e.method = std::string(to_string(spec.method));
    if (spec.estimand) {
      e.estimand = std::string(to_string(*spec.estimand));
      e.route = std::string(to_string(route_of(*spec.estimand, spec.method)));
    } else {
      e.estimand = "control-mean";
      e.method = "observed";
      e.route = std::string(to_string(Route::kRespondents));
    }
    if (const auto& v = computed[k].value) {
      e.point = v->point;
      e.n_used = v->n_used;
      e.support_warning = v->support_warning;
      e.clamp_fraction = v->clamp_fraction;
      e.n_trimmed = v->n_trimmed;
      e.notes = v->notes;
    } else {
      e.error = computed[k].error.value_or("estimation failed");
    }
    report.estimates.push_back(std::move(e));
  }

  struct DiffIndex {
    std::string label;
    std::size_t first;
    std::size_t second;
  };
  std::vector<DiffIndex> diffs;
  for (const auto& [a, b] : difference_columns()) {
    const auto ia = index_of_column.find(a);
    const auto ib = index_of_column.find(b);
    if (ia == index_of_column.end() || ib == index_of_column.end()) continue;
    diffs.push_back({a + "-" + b, ia->second, ib->second});
  }
  for (const auto& d : diffs) {
    DifferenceEntry de;
    de.label = d.label;
    de.first = keys[d.first];
    de.second = keys[d.second];
    const auto& fa = report.estimates[d.first].point;
    const auto& fb = report.estimates[d.second].point;
    if (fa && fb) {
      de.point = *fa - *fb;
    } else {
      de.error = "component estimate unavailable";
    }
    report.differences.push_back(std::move(de));
  }

  if (config.bootstrap_draws >= 2) {
    BootstrapSpec spec;
    spec.draws = config.bootstrap_draws;
    spec.seed = config.seed;
    spec.ci_level = config.ci_level;
    spec.stratify_by_arm = config.stratify;
    spec.threads = config.threads;
    spec.resample_unit = config.cluster_bootstrap ? ResampleUnit::kCluster : ResampleUnit::kUnit;
    spec.validate(sample);

    StatisticSet set;
    set.names = keys;
    for (const auto& d : diffs) set.names.push_back(d.label);
    set.evaluate = [&keys, &diffs](const PanelSample& s) {
      const auto c = compute_all(s, keys);
      std::vector<std::optional<double>> values;
      values.reserve(c.size() + diffs.size());
      for (const auto& x : c) {
        values.push_back(x.value ? std::optional<double>(x.value->point) : std::nullopt);
      }
      for (const auto& d : diffs) {
        if (values[d.first] && values[d.second]) {
          values.push_back(*values[d.first] - *values[d.second]);
        } else {
          values.push_back(std::nullopt);
        }
      }
      return values;
    };
    const auto results = bootstrap_set(sample, set, spec, false);
    const std::string failure_note =
        "bootstrap unreliable: more than " +
        std::to_string(static_cast<int>(std::lround(spec.max_failure_share * 100))) +
        "% of replicates failed";
    for (std::size_t k = 0; k < keys.size(); ++k) {
      auto& e = report.estimates[k];
      if (!e.point) continue;
      if (const auto& r = results[k]) {
        e.se = r->se;
        e.ci_lo = r->ci_lo;
        e.ci_hi = r->ci_hi;
        e.draws_used = r->draws_used;
        e.failures = r->failures;
      } else {
        e.error = failure_note;
      }
    }
    for (std::size_t i = 0; i < diffs.size(); ++i) {
      auto& de = report.differences[i];
      if (!de.point) continue;
      if (const auto& r = results[keys.size() + i]) {
        de.se = r->se;
        de.ci_lo = r->ci_lo;
        de.ci_hi = r->ci_hi;
      } else {
        de.error = failure_note;
      }
    }

    try {
      const auto p = diagnostic_pvalue(sample, spec);
      report.diagnostic.statistic = p.statistic;
      report.diagnostic.pvalue = p.pvalue;
      report.diagnostic.joint_pvalue = p.joint_pvalue;
      report.diagnostic.draws_used = p.draws_used;
    } catch (const EstimationError& e) {
      report.diagnostic.error = e.what();
    }
  } else {
    try {
      report.diagnostic.statistic = ra_diagnostic(sample).statistic;
    } catch (const EstimationError& e) {
      report.diagnostic.error = e.what();
    }
  }

  report.provenance = make_provenance(config, hash_file(config.input));
  return report;
}

EstimateReport run_estimate(const JobConfig& config) {
  const auto sample = load_csv(config.input, config.schema);
  if (sample.size() == 0) throw DataError("input has no data rows");
  return estimate_sample(sample, config);
}

std::string report_to_json(const EstimateReport& report, int indent) {
  ordered_json j;
  j["schema"] = "attrition-cic/estimate-report/v1";
  j["input"] = report.input;
  const auto& a = report.attrition;
  ordered_json baseline = ordered_json::object();
  baseline["treated_respondents"] = opt(a.baseline_mean[cell_index(1, 1)]);
  baseline["control_respondents"] = opt(a.baseline_mean[cell_index(0, 1)]);
  baseline["treated_attritors"] = opt(a.baseline_mean[cell_index(1, 0)]);
  baseline["control_attritors"] = opt(a.baseline_mean[cell_index(0, 0)]);
  j["attrition"] = {{"n", a.n},
                    {"overall", a.overall},
                    {"treatment", a.treatment},
                    {"control", a.control},
                    {"counts", counts_json(a.counts)},
                    {"baseline_mean", baseline}};
  ordered_json estimates = ordered_json::array();
  for (const auto& e : report.estimates) {
    estimates.push_back({{"key", e.key},
                         {"column", e.column},
                         {"estimand", e.estimand},
                         {"method", e.method},
                         {"route", e.route},
                         {"point", opt(e.point)},
                         {"se", opt(e.se)},
                         {"ci_lo", opt(e.ci_lo)},
                         {"ci_hi", opt(e.ci_hi)},
                         {"draws_used", e.draws_used},
                         {"failures", e.failures},
                         {"n_used", counts_json(e.n_used)},
                         {"support_warning", e.support_warning},
                         {"clamp_fraction", e.clamp_fraction},
                         {"n_trimmed", e.n_trimmed},
                         {"notes", e.notes},
                         {"error", opt(e.error)}});
  }
  j["estimates"] = estimates;
  ordered_json diffs = ordered_json::array();
  for (const auto& d : report.differences) {
    diffs.push_back({{"label", d.label},
                     {"first", d.first},
                     {"second", d.second},
                     {"point", opt(d.point)},
                     {"se", opt(d.se)},
                     {"ci_lo", opt(d.ci_lo)},
                     {"ci_hi", opt(d.ci_hi)},
                     {"error", opt(d.error)}});
  }
  j["differences"] = diffs;
  const auto& dg = report.diagnostic;
  ordered_json diag = {{"statistic", dg.statistic}};
  diag["pvalue"] = dg.pvalue ? ordered_json(*dg.pvalue) : ordered_json(nullptr);
  diag["joint_pvalue"] = opt(dg.joint_pvalue);
  diag["draws_used"] = dg.draws_used;
  diag["error"] = opt(dg.error);
  j["ra_diagnostic"] = diag;
  j["provenance"] = provenance_json(report.provenance);
  return j.dump(indent);
}

namespace {

std::string csv_real(const std::optional<double>& v) { return v ? format_real(*v) : ""; }

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string join_notes(const std::vector<std::string>& notes, const std::optional<std::string>& error) {
  std::string s;
  for (const auto& n : notes) s += (s.empty() ? "" : "; ") + n;
  if (error) s += (s.empty() ? "" : "; ") + *error;
  return s;
}

}  // namespace

void write_report_csv(std::ostream& out, const EstimateReport& report) {
  out << "section,key,column,estimand,method,route,point,se,ci_lo,ci_hi,support_warning,"
         "clamp_fraction,notes\n";
  for (const auto& e : report.estimates) {
    out << "estimate," << e.key << ',' << e.column << ',' << e.estimand << ',' << e.method << ','
        << e.route << ',' << csv_real(e.point) << ',' << csv_real(e.se) << ','
        << csv_real(e.ci_lo) << ',' << csv_real(e.ci_hi) << ','
        << (e.support_warning ? "true" : "false") << ',' << format_real(e.clamp_fraction) << ','
        << csv_quote(join_notes(e.notes, e.error)) << '\n';
  }
  for (const auto& d : report.differences) {
    out << "difference," << d.first << '-' << d.second << ',' << d.label << ",,,,"
        << csv_real(d.point) << ',' << csv_real(d.se) << ',' << csv_real(d.ci_lo) << ','
        << csv_real(d.ci_hi) << ",,," << csv_quote(join_notes({}, d.error)) << '\n';
  }
  const auto& a = report.attrition;
  out << "attrition,overall,,,,," << format_real(a.overall) << ",,,,,,\n";
  out << "attrition,treatment,,,,," << format_real(a.treatment) << ",,,,,,\n";
  out << "attrition,control,,,,," << format_real(a.control) << ",,,,,,\n";
  const auto& dg = report.diagnostic;
  for (std::size_t d = 0; d < 2; ++d) {
    out << "ra_diagnostic,d" << d << ",,,,," << format_real(dg.statistic[d]) << ",,,,,,"
        << (dg.pvalue ? "pvalue=" + format_real((*dg.pvalue)[d]) : join_notes({}, dg.error))
        << '\n';
  }
}

void write_report_text(std::ostream& out, const EstimateReport& report) {
  const auto fixed = [](const std::optional<double>& v, int width, int precision = 3) {
    std::ostringstream os;
    os << std::right << std::setw(width);
    if (v) {
      os << std::fixed << std::setprecision(precision) << *v;
    } else {
      os << "--";
    }
    return os.str();
  };
  out << "Input: " << report.input << "   N = " << report.attrition.n << '\n';
  out << "\nPanel A. Observed difference in means and attrition corrections\n";
  out << std::left << std::setw(6) << "Col" << std::setw(14) << "Estimand" << std::setw(10)
      << "Method" << std::setw(32) << "Route" << std::right << std::setw(11) << "Estimate"
      << std::setw(11) << "S.E." << std::setw(24) << "CI" << '\n';
  for (const auto& e : report.estimates) {
    std::string ci = "--";
    if (e.ci_lo && e.ci_hi) {
      std::ostringstream os;
      os << std::fixed << std::setprecision(3) << '[' << *e.ci_lo << ", " << *e.ci_hi << ']';
      ci = os.str();
    }
    out << std::left << std::setw(6) << e.column << std::setw(14) << e.estimand << std::setw(10)
        << e.method << std::setw(32) << e.route << fixed(e.point, 11) << fixed(e.se, 11)
        << std::right << std::setw(24) << ci;
    if (e.support_warning) out << "  [support clamp " << std::setprecision(3) << e.clamp_fraction << ']';
    out << '\n';
    for (const auto& note : e.notes) out << "      note: " << note << '\n';
    if (e.error) out << "      unavailable: " << *e.error << '\n';
  }
  if (!report.differences.empty()) {
    out << "\nPanel B. Differences between estimates\n";
    out << std::left << std::setw(10) << "" << std::right << std::setw(11) << "Difference"
        << std::setw(11) << "S.E." << '\n';
    for (const auto& d : report.differences) {
      out << std::left << std::setw(10) << d.label << fixed(d.point, 11) << fixed(d.se, 11);
      if (d.error) out << "  (" << *d.error << ')';
      out << '\n';
    }
  }
  const auto& a = report.attrition;
  out << "\nPanel C. Attrition rates and baseline outcome\n";
  out << std::fixed << std::setprecision(1) << "Attrition %  overall " << 100 * a.overall
      << "  treatment " << 100 * a.treatment << "  control " << 100 * a.control << '\n';
  out << "Mean baseline  TR" << fixed(a.baseline_mean[cell_index(1, 1)], 10) << "  CR"
      << fixed(a.baseline_mean[cell_index(0, 1)], 10) << "  TA"
      << fixed(a.baseline_mean[cell_index(1, 0)], 10) << "  CA"
      << fixed(a.baseline_mean[cell_index(0, 0)], 10) << '\n';
  const auto& dg = report.diagnostic;
  out << "\nRandom-assignment diagnostic (sup gap)";
  out << "  d=0:" << fixed(dg.statistic[0], 8) << "  d=1:" << fixed(dg.statistic[1], 8);
  if (dg.pvalue) {
    out << "   p-values:" << fixed((*dg.pvalue)[0], 7) << fixed((*dg.pvalue)[1], 7)
        << "  joint:" << fixed(dg.joint_pvalue, 7);
  }
  if (dg.error) out << "   (" << *dg.error << ')';
  out << '\n';
  out << "\nconfig " << report.provenance.config_hash << "  seed " << report.provenance.seed
      << "  version " << report.provenance.version << '\n';
  out.unsetf(std::ios::floatfield);
}

// ---------------------------------------------------------------------------
// simulate

SimDesign design_from_config(const JobConfig& config) {
  auto design = design_preset(config.design, config.n, config.sigma, config.beta2, config.seed);
  design.response = config.response;
  return design;
}

std::vector<McEstimator> mc_estimators_from_config(const JobConfig& config) {
  static const std::vector<std::pair<std::string, McEstimator>> names = {
      {"naive", McEstimator::kNaive},          {"att_r", McEstimator::kCicAttR},
      {"atu_r", McEstimator::kCicAtuR},        {"ate_r", McEstimator::kCicAteR},
      {"ipw1_ate_r", McEstimator::kIpw1AteR},  {"ipw2_ate_r", McEstimator::kIpw2AteR},
      {"ate_ra", McEstimator::kCicAteRa},      {"ate_nora", McEstimator::kCicAteNora},
      {"ipw1_ate", McEstimator::kIpw1Ate},     {"ipw2_ate", McEstimator::kIpw2Ate}};
  std::vector<McEstimator> out;
  for (const auto& [name, e] : names) {
    const bool wanted = config.estimators.empty() || name == "naive" ||
                        std::find(config.estimators.begin(), config.estimators.end(), name) !=
                            config.estimators.end();
    if (!wanted) continue;
    if (!config.trim && (e == McEstimator::kIpw2AteR || e == McEstimator::kIpw2Ate)) continue;
    out.push_back(e);
  }
  return out;
}

McSummary run_simulate(const JobConfig& config) {
  const auto design = design_from_config(config);
  McOptions options;
  options.truth_mc_size = config.truth_mc_size;
  options.threads = config.threads;
  return run_monte_carlo(design, config.reps, mc_estimators_from_config(config), options);
}

std::string simulation_to_json(const McSummary& summary, const Provenance& provenance, int indent) {
  auto j = ordered_json::parse(summary_to_json(summary, -1));
  j["provenance"] = provenance_json(provenance);
  return j.dump(indent);
}

// ---------------------------------------------------------------------------
// validate

std::vector<SupportCheck> support_checks(const PanelSample& sample) {
  struct Pair {
    std::string assumption;
    int inner_g, inner_r, outer_g, outer_r;
  };
  static const std::vector<Pair> pairs = {
      {"ATT-R support containment", 1, 1, 0, 1},
      {"ATU-R support containment", 0, 1, 1, 1},
      {"treated-attritor support containment", 1, 0, 1, 1},
      {"treated-attritor support containment", 1, 0, 0, 1},
      {"control-attritor support containment", 0, 0, 0, 1},
      {"control-attritor support containment", 0, 0, 1, 1},
  };
  std::vector<SupportCheck> out;
  for (const auto& p : pairs) {
    const auto inner = sample.cell_values(p.inner_g, p.inner_r, Field::kBaseline);
    const auto outer = sample.cell_values(p.outer_g, p.outer_r, Field::kBaseline);
    if (inner.empty() || outer.empty()) continue;
    SupportCheck c;
    c.assumption = p.assumption;
    c.inner_cell = cell_name(p.inner_g, p.inner_r);
    c.outer_cell = cell_name(p.outer_g, p.outer_r);
    const auto [imin, imax] = std::minmax_element(inner.begin(), inner.end());
    const auto [omin, omax] = std::minmax_element(outer.begin(), outer.end());
    c.inner_range = {*imin, *imax};
    c.outer_range = {*omin, *omax};
    c.contained = *imin >= *omin && *imax <= *omax;
    if (!c.contained) {
      std::ostringstream os;
      os << c.assumption << ": baseline range of " << c.inner_cell << " [" << *imin << ", "
         << *imax << "] is not contained in that of " << c.outer_cell << " [" << *omin << ", "
         << *omax << "]";
      c.message = os.str();
    }
    out.push_back(std::move(c));
  }
  return out;
}

ValidationReport validate_stream(std::istream& in, const JobConfig& config) {
  ValidationReport report;
  report.input = config.input;
  auto scan = scan_csv(in, config.schema);
  report.rows = scan.rows;
  report.violations = std::move(scan.violations);
  if (!scan.records.empty()) {
    const auto sample = PanelSample::from_records(std::move(scan.records));
    report.attrition = attrition_summary(sample);
    report.support = support_checks(sample);
  }
  report.provenance = make_provenance(config, hash_file(config.input));
  return report;
}

ValidationReport run_validate(const JobConfig& config) {
  std::ifstream in(config.input);
  if (!in) throw DataError("cannot open '" + config.input + "'");
  return validate_stream(in, config);
}

std::string validation_to_json(const ValidationReport& report, int indent) {
  ordered_json j;
  j["schema"] = "attrition-cic/validation-report/v1";
  j["input"] = report.input;
  j["valid"] = report.valid();
  j["rows"] = report.rows;
  ordered_json violations = ordered_json::array();
  for (const auto& v : report.violations) {
    violations.push_back({{"row", v.row}, {"column", v.column}, {"message", v.message}});
  }
  j["violations"] = violations;
  if (report.attrition) {
    const auto& a = *report.attrition;
    j["attrition"] = {{"n", a.n},
                      {"overall", a.overall},
                      {"treatment", a.treatment},
                      {"control", a.control},
                      {"counts", counts_json(a.counts)}};
  } else {
    j["attrition"] = nullptr;
  }
  ordered_json support = ordered_json::array();
  for (const auto& s : report.support) {
    support.push_back({{"assumption", s.assumption},
                       {"inner_cell", s.inner_cell},
                       {"outer_cell", s.outer_cell},
                       {"inner_range", s.inner_range},
                       {"outer_range", s.outer_range},
                       {"contained", s.contained},
                       {"message", s.message}});
  }
  j["support"] = support;
  j["provenance"] = provenance_json(report.provenance);
  return j.dump(indent);
}

void write_validation_csv(std::ostream& out, const ValidationReport& report) {
  out << "kind,row,column,message\n";
  for (const auto& v : report.violations) {
    out << "violation," << v.row << ',' << csv_quote(v.column) << ',' << csv_quote(v.message) << '\n';
  }
  for (const auto& s : report.support) {
    if (!s.contained) out << "support_warning,,," << csv_quote(s.message) << '\n';
  }
  if (report.attrition) {
    const auto& c = report.attrition->counts;
    for (int g = 0; g <= 1; ++g) {
      for (int r = 0; r <= 1; ++r) {
        out << "cell_count,,g=" << g << " r=" << r << ',' << c[cell_index(g, r)] << '\n';
      }
    }
  }
}

void write_validation_text(std::ostream& out, const ValidationReport& report) {
  out << report.input << ": " << (report.valid() ? "valid" : "invalid") << " (" << report.rows
      << " data rows)\n";
  for (const auto& v : report.violations) {
    out << "  row " << v.row;
    if (!v.column.empty()) out << ", column '" << v.column << "'";
    out << ": " << v.message << '\n';
  }
  if (report.attrition) {
    const auto& a = *report.attrition;
    const auto& c = a.counts;
    out << "\n           r=0      r=1\n";
    for (int g = 0; g <= 1; ++g) {
      out << "  g=" << g << "  " << std::setw(7) << c[cell_index(g, 0)] << "  " << std::setw(7)
          << c[cell_index(g, 1)] << '\n';
    }
    out << std::fixed << std::setprecision(1) << "\nAttrition %  overall " << 100 * a.overall
        << "  treatment " << 100 * a.treatment << "  control " << 100 * a.control << '\n';
    out.unsetf(std::ios::floatfield);
  }
  bool any = false;
  for (const auto& s : report.support) {
    if (s.contained) continue;
    if (!any) out << '\n';
    any = true;
    out << "warning: " << s.message << '\n';
  }
}

}  // namespace attrition::cli
