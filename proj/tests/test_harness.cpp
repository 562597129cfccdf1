#include "mhp/harness.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace mhp;

namespace {

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

double rate(const sim::Scenario& s, const std::string& origin, double minute) {
  const auto l = s.graph->index_of(origin);
  for (const auto& d : s.demands)
    if (d.origin == l) return d.rate_at(minute * 60.0);
  return 0.0;
}

}  // namespace

TEST_CASE("catalog") {
  const auto names = harness::catalog_names();
  CHECK(names.size() == 9);
  for (const auto& n : names) CHECK_NOTHROW(harness::load_scenario(n));
  CHECK_THROWS_AS(harness::load_scenario("net9x9-heavy"), harness::HarnessError);
  try {
    harness::resolve_scenario("nope");
  } catch (const harness::HarnessError& e) {
    CHECK(e.kind() == harness::HarnessErrorKind::UnknownScenario);
  }
}

TEST_CASE("heavy demand profile and exact scaled levels") {
  const auto heavy = harness::load_scenario("net1x2-heavy");
  CHECK(rate(heavy, "EB1", 10) == 1800.0);
  CHECK(rate(heavy, "EB1", 40) == 900.0);
  CHECK(rate(heavy, "EB1", 70) == 1000.0);
  CHECK(rate(heavy, "EB1", 100) == 0.0);
  CHECK(rate(heavy, "SB2_in", 10) == 900.0);
  CHECK(rate(heavy, "SB2_in", 89) == 900.0);
  CHECK(rate(heavy, "SB2_in", 91) == 0.0);
  CHECK(heavy.horizon_s == 7200.0);

  const auto under = harness::load_scenario("net1x2-under");
  const auto slight = harness::load_scenario("net1x2-slight");
  for (double m : {10.0, 40.0, 70.0, 100.0}) {
    CHECK(rate(under, "EB1", m) == 0.5 * rate(heavy, "EB1", m));
    CHECK(rate(slight, "EB1", m) == 0.75 * rate(heavy, "EB1", m));
  }
  const auto h3 = harness::load_scenario("net1x3-heavy");
  CHECK(rate(h3, "EB1", 10) == 1800.0);
  CHECK(rate(h3, "EB1", 40) == 0.0);
  CHECK(rate(h3, "EB1", 70) == 1000.0);
  CHECK(rate(h3, "SB3_in", 10) == 900.0);
  CHECK(h3.intersections.size() == 3);
}

TEST_CASE("result table is recomputable from the per-seed CSV") {
  const auto s = harness::load_scenario("net1x2-slight");
  harness::ControllerSpec w;
  harness::ControllerSpec mp;
  mp.kind = "maxpressure";
  mp.hop = 1;
  const auto seeds = harness::default_seeds(4);
  std::vector<harness::ResultRow> rows{harness::evaluate(s, w, seeds), harness::evaluate(s, mp, seeds)};
  std::ostringstream os;
  harness::write_per_seed_csv(os, rows);
  const auto csv = parse_csv(os.str());
  REQUIRE(csv.size() == 9);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::vector<double> tts;
    for (std::size_t k = 1; k < csv.size(); ++k)
      if (csv[k][1] == rows[r].method) tts.push_back(std::stod(csv[k][4]));
    REQUIRE(tts.size() == 4);
    double mean = 0.0;
    for (double v : tts) mean += v / 4.0;
    double var = 0.0;
    for (double v : tts) var += (v - mean) * (v - mean) / 3.0;
    CHECK(std::abs(mean - rows[r].tts_h.mean) <= 1e-9);
    CHECK(std::abs(std::sqrt(var) - rows[r].tts_h.std) <= 1e-9);
  }
  std::ostringstream table;
  harness::write_result_table_csv(table, rows);
  CHECK(parse_csv(table.str()).size() == 3);
}

TEST_CASE("evaluation is deterministic across thread counts") {
  const auto s = harness::load_scenario("net1x3-slight");
  harness::ControllerSpec g;
  g.kind = "greedy";
  g.hop = 2;
  const auto a = harness::evaluate(s, g, harness::default_seeds(3), 1);
  const auto b = harness::evaluate(s, g, harness::default_seeds(3), 3);
  for (std::size_t k = 0; k < 3; ++k) CHECK(a.episodes[k].tts_h == b.episodes[k].tts_h);
  CHECK(a.method == "greedy");
  CHECK(a.hop == 2);
}

TEST_CASE("unknown controller and missing policy") {
  harness::ControllerSpec bad;
  bad.kind = "psychic";
  CHECK_THROWS_AS(harness::make_controller(bad), harness::HarnessError);
  harness::ControllerSpec rl;
  rl.kind = "rl";
  CHECK_THROWS(harness::make_controller(rl));
}

TEST_CASE("summary statistics") {
  const auto s = harness::summarize({1.0, 2.0, 3.0, 4.0});
  CHECK(s.mean == 2.5);
  CHECK(s.std == doctest::Approx(std::sqrt(5.0 / 3.0)));
  CHECK(harness::summarize({7.0}).std == 0.0);
}

TEST_CASE("pearson correlation") {
  std::vector<double> x, y, z;
  for (int i = 0; i < 12; ++i) {
    x.push_back(i);
    y.push_back(3.0 * i - 2.0);
    z.push_back(-0.5 * i + (i % 2 ? 0.1 : -0.1));
  }
  CHECK(harness::pearson(x, y) == doctest::Approx(1.0));
  CHECK(harness::pearson(x, z) < -0.99);
  try {
    harness::pearson(std::vector<double>(5, 1.0), std::vector<double>(5, 2.0));
    FAIL("expected InsufficientSamples");
  } catch (const harness::HarnessError& e) {
    CHECK(e.kind() == harness::HarnessErrorKind::InsufficientSamples);
  }
  try {
    harness::pearson(x, std::vector<double>(12, 2.0));
    FAIL("expected DegenerateVariance");
  } catch (const harness::HarnessError& e) {
    CHECK(e.kind() == harness::HarnessErrorKind::DegenerateVariance);
  }
}

TEST_CASE("split report is time weighted") {
  sim::MetricsLog log;
  log.splits.push_back({0, 0.0, 90.0, {0.8, 0.2}});
  log.splits.push_back({0, 90.0, 90.0, {0.4, 0.6}});
  log.splits.push_back({1, 0.0, 90.0, {0.1, 0.9}});
  const auto s = harness::split_report(log, 0, 0.0, 180.0);
  CHECK(s.mean_splits[0] == doctest::Approx(0.6));
  CHECK(s.ratio(0, 1) == doctest::Approx(1.5));
  // window covering a third of the second record
  const auto part = harness::split_report(log, 0, 45.0, 120.0);
  CHECK(part.mean_splits[0] == doctest::Approx((45 * 0.8 + 30 * 0.4) / 75.0));
  try {
    harness::split_report(log, 0, 500.0, 600.0);
    FAIL("expected EmptyWindow");
  } catch (const harness::HarnessError& e) {
    CHECK(e.kind() == harness::HarnessErrorKind::EmptyWindow);
  }
}

TEST_CASE("maxpressure split records are one-hot") {
  const auto s = harness::load_scenario("net1x2-under");
  harness::ControllerSpec mp;
  mp.kind = "maxpressure";
  std::vector<sim::MetricsLog> logs;
  harness::evaluate(s, mp, {0}, 1, &logs);
  REQUIRE(logs.size() == 1);
  CHECK(logs[0].splits.size() == 2 * 720);
  const auto sr = harness::split_report(logs[0], 1, 0.0, 1800.0);
  CHECK(sr.mean_splits[0] + sr.mean_splits[1] == doctest::Approx(1.0));
}

TEST_CASE("hop table is ordered by hop") {
  harness::ResultRow a, b;
  a.hop = 2;
  a.tts_h = {10.0, 1.0};
  a.episodes = {{0, 10.0}};
  b.hop = 0;
  b.tts_h = {12.0, 1.0};
  b.episodes = {{0, 12.0}};
  const auto rows = harness::tts_vs_hop({a, b});
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].hop == 0);
  CHECK(rows[1].per_seed == std::vector<double>{10.0});
  std::ostringstream os;
  harness::write_hop_csv(os, rows);
  CHECK(parse_csv(os.str()).size() == 3);
}

TEST_CASE("manifest identifies the run") {
  const auto s = harness::load_scenario("net1x2-heavy");
  const auto m = harness::make_manifest("mhp sim run", s, {0, 1}, {{"controller", "webster"}});
  CHECK(m["scenario"]["name"] == "net1x2-heavy");
  CHECK(m["scenario"]["source_hash"] == s.source_hash);
  CHECK(m["seeds"].size() == 2);
  CHECK(m["config"]["controller"] == "webster");
  CHECK(m.contains("version"));
  CHECK(harness::load_scenario("net1x2-heavy").source_hash == s.source_hash);
  CHECK(harness::load_scenario("net1x2-under").source_hash != s.source_hash);
}
