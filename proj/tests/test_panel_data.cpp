#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"

#include "attrition/errors.hpp"
#include "attrition/panel_data.hpp"
#include "attrition/rng.hpp"

using namespace attrition;

namespace {

UnitRecord unit(std::string id, int g, int r, double y0, std::optional<double> y1 = {}) {
  UnitRecord rec;
  rec.id = std::move(id);
  rec.g = g;
  rec.r = r;
  rec.y0 = y0;
  rec.y1 = y1;
  return rec;
}

PanelSample parse(const std::string& text) {
  std::istringstream in(text);
  return read_csv(in);
}

}  // namespace

TEST_SUITE("panel_data") {

TEST_CASE("two-row file parses into the expected cells") {
  const auto s = parse("id,g,r,y0,y1\na,1,1,1.0,2.0\nb,0,0,0.5,\n");
  CHECK(s.size() == 2);
  CHECK(s.count(1, 1) == 1);
  CHECK(s.count(0, 0) == 1);
  CHECK(s.count(0, 1) == 0);
  CHECK(s.records()[0].y1 == 2.0);
  CHECK_FALSE(s.records()[1].y1.has_value());
}

TEST_CASE("follow-up value on an attritor row is rejected with its row number") {
  try {
    parse("id,g,r,y0,y1\nx,1,1,1,1\ny,0,0,0.5,3.0\n");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(e.row() == 2);
    CHECK(std::string(e.what()).find("y1 present with r=0") != std::string::npos);
  }
}

TEST_CASE("scan reports every bad row") {
  std::istringstream in(
      "id,g,r,y0,y1\n1,0,0,0.5,3.0\n2,1,1,1.0,\n3,2,1,1.0,2.0\n4,1,1,abc,2.0\n5,1,1,1,2\n");
  const auto scan = scan_csv(in);
  REQUIRE(scan.violations.size() == 4);
  CHECK(scan.violations[0].row == 1);
  CHECK(scan.violations[0].message == "y1 present with r=0");
  CHECK(scan.violations[1].message == "y1 absent with r=1");
  CHECK(scan.violations[2].column == "g");
  CHECK(scan.violations[3].column == "y0");
  CHECK(scan.records.size() == 1);
}

TEST_CASE("missing column and custom column names") {
  std::istringstream missing("id,g,r,y0\n1,0,1,0\n");
  CHECK_THROWS_AS(read_csv(missing), DataError);

  CsvSchema schema;
  schema.g = "arm";
  schema.y1 = "follow";
  schema.cluster = "village";
  std::istringstream in("id,arm,r,y0,follow,village\n1,1,1,0.5,1.5,v1\n2,0,0,0.25,,v2\n");
  const auto s = read_csv(in, schema);
  CHECK(s.count(1, 1) == 1);
  CHECK(s.has_clusters());
  CHECK(s.records()[1].cluster == "v2");
}

TEST_CASE("subsample returns cell values in record order") {
  const auto s = PanelSample::from_records({unit("1", 1, 1, 1.0, 5.0), unit("2", 1, 0, 2.0)});
  const auto y1 = s.subsample(1, 1, Field::kFollowUp);
  REQUIRE(y1.size() == 1);
  CHECK(y1[0] == 5.0);
  const auto y0 = s.subsample(1, 0, Field::kBaseline);
  REQUIRE(y0.size() == 1);
  CHECK(y0[0] == 2.0);
  CHECK_THROWS_AS(s.subsample(0, 1, Field::kFollowUp), EstimationError);
  CHECK_THROWS_AS(s.subsample(1, 0, Field::kFollowUp), EstimationError);
}

TEST_CASE("attrition summary") {
  SUBCASE("everyone responds") {
    const auto s = PanelSample::from_records(
        {unit("1", 0, 1, 0, 1), unit("2", 1, 1, 0, 1), unit("3", 1, 1, 2, 3)});
    const auto a = attrition_summary(s);
    CHECK(a.overall == 0.0);
    CHECK(a.treatment == 0.0);
    CHECK(a.control == 0.0);
  }
  SUBCASE("one control attritor out of two") {
    const auto s = PanelSample::from_records({unit("1", 0, 1, 1.0, 2.0), unit("2", 0, 0, 3.0),
                                              unit("3", 1, 1, 0.0, 1.0), unit("4", 1, 1, 2.0, 4.0)});
    const auto a = attrition_summary(s);
    CHECK(a.control == doctest::Approx(0.5));
    CHECK(a.treatment == 0.0);
    CHECK(a.overall == doctest::Approx(0.25));
    REQUIRE(a.baseline_mean[cell_index(1, 1)].has_value());
    CHECK(*a.baseline_mean[cell_index(1, 1)] == doctest::Approx(1.0));
    CHECK_FALSE(a.baseline_mean[cell_index(1, 0)].has_value());
  }
  SUBCASE("attrition share of a large file") {
    std::vector<UnitRecord> records;
    const std::size_t n = 12299;
    const std::size_t missing = 1390;  // 11.3% of 12299
    for (std::size_t i = 0; i < n; ++i) {
      const bool lost = i < missing;
      records.push_back(unit(std::to_string(i), static_cast<int>(i % 2), lost ? 0 : 1,
                             static_cast<double>(i), lost ? std::optional<double>{} : 1.0));
    }
    CHECK(attrition_summary(PanelSample::from_records(records)).overall ==
          doctest::Approx(0.113).epsilon(0.001));
  }
}

TEST_CASE("cells partition the sample and probabilities sum to one") {
  Rng rng(7);
  std::vector<UnitRecord> records;
  for (int i = 0; i < 101; ++i) {
    const int g = rng.bernoulli(0.5);
    const int r = rng.bernoulli(0.7);
    records.push_back(unit(std::to_string(i), g, r, rng.normal(),
                           r ? std::optional<double>(rng.normal()) : std::nullopt));
  }
  const auto s = PanelSample::from_records(records);
  std::size_t total = 0;
  double prob = 0.0;
  for (int g = 0; g <= 1; ++g) {
    for (int r = 0; r <= 1; ++r) {
      total += s.cell_values(g, r, Field::kBaseline).size();
      prob += s.cell_probability(g, r);
    }
  }
  CHECK(total == s.size());
  CHECK(prob == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("save then load reproduces every record") {
  Rng rng(99);
  std::vector<UnitRecord> records;
  for (int i = 0; i < 200; ++i) {
    const int r = rng.bernoulli(0.8);
    auto rec = unit("u" + std::to_string(i), rng.bernoulli(0.5), r, rng.normal() * 1e3,
                    r ? std::optional<double>(rng.normal() / 7.0) : std::nullopt);
    rec.cluster = "c" + std::to_string(i % 9);
    records.push_back(rec);
  }
  records.push_back(unit("tiny", 0, 1, 5e-324, 1e308));
  const auto s = PanelSample::from_records(records);
  std::stringstream buffer;
  write_csv(buffer, s);
  const auto back = read_csv(buffer);
  CHECK(back.records() == s.records());
}

TEST_CASE("invalid records name the offending record") {
  CHECK_THROWS_AS(PanelSample::from_records({unit("1", 2, 1, 0, 1)}), DataError);
  CHECK_THROWS_AS(PanelSample::from_records({unit("1", 0, 1, 0)}), DataError);
  CHECK_THROWS_AS(PanelSample::from_records({unit("1", 0, 1, std::nan(""), 1)}), DataError);
}

}  // TEST_SUITE
