#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace attrition {

/// One surveyed unit. `g` is the treatment-path indicator (1 = treated in the
/// follow-up period), `r` the follow-up response indicator.
struct UnitRecord {
  std::string id;
  int g = 0;
  int r = 0;
  double y0 = 0.0;
  std::optional<double> y1;
  std::optional<std::string> cluster;

  bool operator==(const UnitRecord&) const = default;
};

enum class Field { kBaseline, kFollowUp };

/// Index of the (g, r) cell in arrays of four: 2 * g + r.
constexpr std::size_t cell_index(int g, int r) noexcept {
  return static_cast<std::size_t>(2 * g + r);
}

using CellCounts = std::array<std::size_t, 4>;

/// Validated, immutable two-period sample. The per-cell outcome vectors are
/// extracted once at construction; estimators read them through subsample().
class PanelSample {
 public:
  PanelSample() = default;

  /// Validates every record; throws DataError naming the 1-based record.
  static PanelSample from_records(std::vector<UnitRecord> records);

  /// Builds a resample from row indices into `source` (rows may repeat).
  static PanelSample resample(const PanelSample& source, std::span<const std::size_t> rows);

  const std::vector<UnitRecord>& records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }

  std::size_t count(int g, int r) const noexcept { return counts_[cell_index(g, r)]; }
  const CellCounts& counts() const noexcept { return counts_; }
  std::size_t arm_size(int g) const noexcept { return count(g, 0) + count(g, 1); }
  std::size_t respondents() const noexcept { return count(0, 1) + count(1, 1); }

  /// P(G=g, R=r) as n_{g,r} / n.
  double cell_probability(int g, int r) const;
  /// P(R=r | G=g); 0 for an empty arm.
  double response_share(int g, int r) const;

  /// Values of `field` in cell (g, r), in record order. Throws
  /// EstimationError for an empty cell or a follow-up request on attritors.
  std::span<const double> subsample(int g, int r, Field field) const;

  /// Cell values without the emptiness check (may be empty).
  std::span<const double> cell_values(int g, int r, Field field) const noexcept;

  bool has_clusters() const noexcept { return has_clusters_; }

 private:
  std::vector<UnitRecord> records_;
  CellCounts counts_{};
  std::array<std::vector<double>, 4> baseline_;
  std::array<std::vector<double>, 2> follow_up_;  // indexed by g, respondents only
  bool has_clusters_ = false;

  void index_cells();
};

/// Column names used for CSV interchange.
struct CsvSchema {
  std::string id = "id";
  std::string g = "g";
  std::string r = "r";
  std::string y0 = "y0";
  std::string y1 = "y1";
  std::string cluster = "cluster";
};

struct SchemaViolation {
  std::size_t row = 0;  // 1-based data row, 0 for header problems
  std::string column;
  std::string message;
};

/// Result of a non-throwing parse: every violation found plus the records
/// that parsed cleanly.
struct CsvScan {
  std::vector<UnitRecord> records;
  std::vector<SchemaViolation> violations;
  std::size_t rows = 0;
};

CsvScan scan_csv(std::istream& in, const CsvSchema& schema = {});

/// Parses and validates; throws DataError on the first violation.
PanelSample read_csv(std::istream& in, const CsvSchema& schema = {});
PanelSample load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});

/// Writes the shortest round-trip decimal representation of every value.
void write_csv(std::ostream& out, const PanelSample& sample, const CsvSchema& schema = {});
void save_csv(const std::filesystem::path& path, const PanelSample& sample,
              const CsvSchema& schema = {});

struct AttritionSummary {
  std::size_t n = 0;
  double overall = 0.0;
  double treatment = 0.0;
  double control = 0.0;
  CellCounts counts{};
  /// Mean baseline outcome per (g, r) cell, indexed by cell_index().
  std::array<std::optional<double>, 4> baseline_mean{};
};

AttritionSummary attrition_summary(const PanelSample& sample);

}  // namespace attrition
