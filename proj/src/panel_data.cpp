#include "attrition/panel_data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

#include "attrition/errors.hpp"

namespace attrition {

namespace {

void validate_record(const UnitRecord& rec, std::size_t row) {
  if (rec.g != 0 && rec.g != 1) throw DataError("g must be 0 or 1", row, "g");
  if (rec.r != 0 && rec.r != 1) throw DataError("r must be 0 or 1", row, "r");
  if (!std::isfinite(rec.y0)) throw DataError("y0 must be finite", row, "y0");
  if (rec.y1.has_value() && rec.r == 0) throw DataError("y1 present with r=0", row, "y1");
  if (!rec.y1.has_value() && rec.r == 1) throw DataError("y1 absent with r=1", row, "y1");
  if (rec.y1.has_value() && !std::isfinite(*rec.y1)) {
    throw DataError("y1 must be finite", row, "y1");
  }
}

}  // namespace

PanelSample PanelSample::from_records(std::vector<UnitRecord> records) {
  for (std::size_t i = 0; i < records.size(); ++i) validate_record(records[i], i + 1);
  PanelSample sample;
  sample.records_ = std::move(records);
  sample.index_cells();
  return sample;
}

PanelSample PanelSample::resample(const PanelSample& source, std::span<const std::size_t> rows) {
  PanelSample sample;
  sample.records_.reserve(rows.size());
  for (std::size_t row : rows) sample.records_.push_back(source.records_.at(row));
  sample.index_cells();
  return sample;
}

void PanelSample::index_cells() {
  counts_ = {};
  for (auto& v : baseline_) v.clear();
  for (auto& v : follow_up_) v.clear();
  has_clusters_ = !records_.empty();
  for (const auto& rec : records_) {
    const std::size_t cell = cell_index(rec.g, rec.r);
    ++counts_[cell];
    baseline_[cell].push_back(rec.y0);
    if (rec.r == 1) follow_up_[static_cast<std::size_t>(rec.g)].push_back(*rec.y1);
    if (!rec.cluster.has_value()) has_clusters_ = false;
  }
}

double PanelSample::cell_probability(int g, int r) const {
  if (records_.empty()) return 0.0;
  return static_cast<double>(count(g, r)) / static_cast<double>(records_.size());
}

double PanelSample::response_share(int g, int r) const {
  const std::size_t arm = arm_size(g);
  if (arm == 0) return 0.0;
  return static_cast<double>(count(g, r)) / static_cast<double>(arm);
}

std::span<const double> PanelSample::cell_values(int g, int r, Field field) const noexcept {
  if (field == Field::kFollowUp) {
    if (r != 1) return {};
    return follow_up_[static_cast<std::size_t>(g)];
  }
  return baseline_[cell_index(g, r)];
}

std::span<const double> PanelSample::subsample(int g, int r, Field field) const {
  if (field == Field::kFollowUp && r != 1) {
    throw EstimationError("follow-up outcome requested for attritor cell (g=" +
                          std::to_string(g) + ", r=0)");
  }
  if (count(g, r) == 0) {
    throw EstimationError("empty cell (g=" + std::to_string(g) + ", r=" + std::to_string(r) +
                          ")");
  }
  return cell_values(g, r, field);
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        current.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::string(trim(current)));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  fields.push_back(std::string(trim(current)));
  return fields;
}

std::optional<double> parse_real(std::string_view text) {
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  if (text.empty()) return std::nullopt;
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(value)) {
    return std::nullopt;
  }
  return value;
}

std::optional<int> parse_binary(std::string_view text) {
  if (text == "0") return 0;
  if (text == "1") return 1;
  return std::nullopt;
}

struct ColumnMap {
  std::optional<std::size_t> id, g, r, y0, y1, cluster;
};

}  // namespace

CsvScan scan_csv(std::istream& in, const CsvSchema& schema) {
  CsvScan scan;
  std::string line;
  if (!std::getline(in, line)) {
    scan.violations.push_back({0, {}, "missing header row"});
    return scan;
  }
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split_csv_line(line);
  ColumnMap cols;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const auto& name = header[i];
    if (name == schema.id) cols.id = i;
    if (name == schema.g) cols.g = i;
    if (name == schema.r) cols.r = i;
    if (name == schema.y0) cols.y0 = i;
    if (name == schema.y1) cols.y1 = i;
    if (!schema.cluster.empty() && name == schema.cluster) cols.cluster = i;
  }
  const std::pair<const std::optional<std::size_t>*, const std::string*> required[] = {
      {&cols.g, &schema.g}, {&cols.r, &schema.r}, {&cols.y0, &schema.y0}, {&cols.y1, &schema.y1}};
  bool header_ok = true;
  for (const auto& [col, name] : required) {
    if (!col->has_value()) {
      scan.violations.push_back({0, *name, "required column missing from header"});
      header_ok = false;
    }
  }
  if (!header_ok) return scan;

  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const auto fields = split_csv_line(line);
    const std::size_t before = scan.violations.size();
    auto field = [&](std::optional<std::size_t> col) -> std::string_view {
      if (!col.has_value() || *col >= fields.size()) return {};
      return fields[*col];
    };
    if (fields.size() != header.size()) {
      scan.violations.push_back({row, {}, "expected " + std::to_string(header.size()) +
                                              " fields, found " + std::to_string(fields.size())});
      continue;
    }
    UnitRecord rec;
    rec.id = cols.id ? std::string(field(cols.id)) : std::to_string(row);
    const auto g = parse_binary(field(cols.g));
    const auto r = parse_binary(field(cols.r));
    if (!g) scan.violations.push_back({row, schema.g, "non-binary value '" + std::string(field(cols.g)) + "'"});
    if (!r) scan.violations.push_back({row, schema.r, "non-binary value '" + std::string(field(cols.r)) + "'"});
    const auto y0_text = field(cols.y0);
    const auto y0 = parse_real(y0_text);
    if (y0_text.empty()) {
      scan.violations.push_back({row, schema.y0, "missing baseline outcome"});
    } else if (!y0) {
      scan.violations.push_back({row, schema.y0, "malformed number '" + std::string(y0_text) + "'"});
    }
    const auto y1_text = field(cols.y1);
    std::optional<double> y1;
    if (!y1_text.empty()) {
      y1 = parse_real(y1_text);
      if (!y1) {
        scan.violations.push_back({row, schema.y1, "malformed number '" + std::string(y1_text) + "'"});
      }
    }
    if (r && *r == 0 && !y1_text.empty()) {
      scan.violations.push_back({row, schema.y1, "y1 present with r=0"});
    }
    if (r && *r == 1 && y1_text.empty()) {
      scan.violations.push_back({row, schema.y1, "y1 absent with r=1"});
    }
    if (cols.cluster) {
      const auto c = field(cols.cluster);
      if (!c.empty()) rec.cluster = std::string(c);
    }
    if (scan.violations.size() != before) continue;
    rec.g = *g;
    rec.r = *r;
    rec.y0 = *y0;
    rec.y1 = y1;
    scan.records.push_back(std::move(rec));
  }
  scan.rows = row;
  return scan;
}

PanelSample read_csv(std::istream& in, const CsvSchema& schema) {
  auto scan = scan_csv(in, schema);
  if (!scan.violations.empty()) {
    const auto& v = scan.violations.front();
    throw DataError(v.message, v.row, v.column);
  }
  return PanelSample::from_records(std::move(scan.records));
}

PanelSample load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return read_csv(in, schema);
}

namespace {

std::string format_real(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

void write_csv(std::ostream& out, const PanelSample& sample, const CsvSchema& schema) {
  bool any_cluster = false;
  for (const auto& rec : sample.records()) any_cluster = any_cluster || rec.cluster.has_value();
  out << schema.id << ',' << schema.g << ',' << schema.r << ',' << schema.y0 << ',' << schema.y1;
  if (any_cluster) out << ',' << schema.cluster;
  out << '\n';
  for (const auto& rec : sample.records()) {
    out << quote_if_needed(rec.id) << ',' << rec.g << ',' << rec.r << ',' << format_real(rec.y0)
        << ',';
    if (rec.y1) out << format_real(*rec.y1);
    if (any_cluster) out << ',' << quote_if_needed(rec.cluster.value_or(""));
    out << '\n';
  }
}

void save_csv(const std::filesystem::path& path, const PanelSample& sample,
              const CsvSchema& schema) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  write_csv(out, sample, schema);
}

AttritionSummary attrition_summary(const PanelSample& sample) {
  if (sample.empty()) throw DataError("attrition summary of an empty sample");
  AttritionSummary s;
  s.n = sample.size();
  s.counts = sample.counts();
  const auto attr = [&](std::size_t attritors, std::size_t total) {
    return total == 0 ? 0.0 : static_cast<double>(attritors) / static_cast<double>(total);
  };
  s.overall = attr(sample.count(0, 0) + sample.count(1, 0), sample.size());
  s.treatment = attr(sample.count(1, 0), sample.arm_size(1));
  s.control = attr(sample.count(0, 0), sample.arm_size(0));
  for (int g = 0; g <= 1; ++g) {
    for (int r = 0; r <= 1; ++r) {
      const auto values = sample.cell_values(g, r, Field::kBaseline);
      if (values.empty()) continue;
      double sum = 0.0;
      for (double v : values) sum += v;
      s.baseline_mean[cell_index(g, r)] = sum / static_cast<double>(values.size());
    }
  }
  return s;
}

}  // namespace attrition
