#include <doctest.h>

#include <limits>

#include "mcdsim/csv.hpp"
#include "mcdsim/error.hpp"

using namespace mcdsim;

TEST_CASE("doubles round trip exactly") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5, 12345.678901234567, 0.0}) {
    CHECK(csv::parse_double(csv::format_double(v)) == v);
  }
  CHECK(csv::format_double(0.5) == "0.5");
  CHECK_THROWS_AS(csv::parse_double("1.5x"), Error);
}

TEST_CASE("lookup table round trip") {
  std::vector<LookupEntry> t{{1, 3, {10, 20, 70, 0.1 / 3}}, {2, 10, {5, 25, 255, 1.25}}};
  const auto back = csv::parse_lookup_table(csv::emit_lookup_table(t));
  REQUIRE(back.size() == 2);
  CHECK(back[0].latency.total_cycles == 70);
  CHECK(back[0].latency.latency_ms == t[0].latency.latency_ms);
  CHECK(back[1].S == 10);
}

TEST_CASE("metric table round trip and optional std columns") {
  std::vector<MetricEntry> m{{1, 3, 90.5, 0.25, 1.1, 0.01, 3.3, 0.2}};
  CHECK(csv::parse_metric_table(csv::emit_metric_table(m)) == m);
  const auto bare = csv::parse_metric_table("L,S,accuracy_pct,ape_nats,ece_pct\n2,5,80,0.7,9\n");
  REQUIRE(bare.size() == 1);
  CHECK(bare[0].accuracy_std == 0.0);
  CHECK(bare[0].ece_pct == 9.0);
  CHECK_THROWS_AS(csv::parse_metric_table("L,S,accuracy_pct\n1,3,90\n"), Error);
  CHECK_THROWS_AS(csv::parse_metric_table("L,S,accuracy_pct,ape_nats,ece_pct\n1,3,90\n"), Error);
}

TEST_CASE("candidates and bins round trip") {
  std::vector<DseCandidate> c{{1, 3, 0.5, 90, 1.0, 4.0, 0.1, 0.2, 0.3}, {2, 5, 2.0, 91, 1.2, 3.0}};
  MinRequirements req;
  req.max_latency_ms = 1.0;
  const std::string text = csv::emit_candidates(c, req);
  CHECK(text.find("max_latency_ms") != std::string::npos);
  CHECK(csv::parse_candidates(text) == c);
  std::vector<CalibrationBin> bins{{0.0, 0.5, 2, 0.4, 0.5}, {0.5, 1.0, 0, 0.0, 0.0}};
  const auto back = csv::parse_bins(csv::emit_bins(bins));
  REQUIRE(back.size() == 2);
  CHECK(back[0].count == 2);
  CHECK(back[0].mean_confidence == 0.4);
}
