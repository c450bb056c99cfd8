#include <doctest.h>

#include <random>

#include "mcdsim/dse.hpp"
#include "mcdsim/error.hpp"
#include "support.hpp"

using namespace mcdsim;

TEST_CASE("default L domain") {
  CHECK(default_l_domain(1) == std::vector<std::size_t>{1});
  CHECK(default_l_domain(3) == std::vector<std::size_t>{1, 2, 3});
  CHECK(default_l_domain(5) == std::vector<std::size_t>{1, 2, 3, 5});
  CHECK(default_l_domain(6) == std::vector<std::size_t>{1, 2, 3, 4, 6});
  CHECK(default_s_domain().front() == 3);
  CHECK(default_s_domain().back() == 100);
}

TEST_CASE("mode names") {
  CHECK(parse_opt_mode("latency") == OptMode::Latency);
  CHECK(parse_opt_mode("opt-confidence") == OptMode::Confidence);
  CHECK(std::string(to_string(OptMode::Uncertainty)) == "opt-uncertainty");
  CHECK_THROWS_AS(parse_opt_mode("fastest"), Error);
}

TEST_CASE("hardware optimization respects the budget") {
  std::mt19937_64 rng(1);
  const Network net = mcdsim::testing::random_network(rng, 3, false);
  const HwConfig big = optimize_hardware(net.spec, {1u << 30, 1ull << 40});
  CHECK(big.PC == 128);
  CHECK(big.PF == 128);
  CHECK(big.PV == 16);
  CHECK_THROWS_AS(optimize_hardware(net.spec, {1, 1}), InfeasibleError);
  const HwConfig mid = optimize_hardware(net.spec, {2048, 1ull << 40});
  CHECK(mid.PC * mid.PF * mid.PV == 4096);
  CHECK(mid.PF == 128);
  CHECK(mid.PC == 32);
}

TEST_CASE("selection with constraints and ties") {
  std::vector<DseCandidate> c;
  c.push_back({1, 3, 1.0, 90.0, 0.5, 5.0});
  c.push_back({2, 3, 2.0, 92.0, 0.9, 4.0});
  c.push_back({3, 3, 3.0, 92.0, 1.2, 3.0});
  c.push_back({3, 10, 9.0, 93.0, 1.5, 3.0});
  DseRequest req;
  req.mode = OptMode::Latency;
  CHECK(select(c, req).chosen.L == 1);
  req.mode = OptMode::Accuracy;
  CHECK(select(c, req).chosen.S == 10);
  req.mode = OptMode::Confidence;
  CHECK(select(c, req).chosen.S == 3);  // ECE tie broken by latency
  req.min_requirements.max_latency_ms = 2.5;
  req.mode = OptMode::Uncertainty;
  const auto r = select(c, req);
  CHECK(r.chosen.L == 2);
  CHECK(r.filtered_out.size() == 2);
  CHECK(r.filtered_out[0].violations == std::vector<std::string>{"max_latency_ms"});
  req.min_requirements.min_accuracy_pct = 99.0;
  try {
    select(c, req);
    FAIL("expected infeasible");
  } catch (const InfeasibleError& e) {
    CHECK(std::string(e.what()).find("min_accuracy_pct") != std::string::npos);
  }
}

TEST_CASE("join requires matching pairs") {
  std::vector<LookupEntry> lat{{1, 3, {0, 10, 30, 1.0}}};
  std::vector<MetricEntry> met{{1, 3, 90, 0, 1.0, 0, 5.0, 0}};
  const auto joined = join_candidates(lat, met);
  REQUIRE(joined.size() == 1);
  CHECK(joined[0].latency_ms == 1.0);
  CHECK(joined[0].ape_nats == 1.0);
  met[0].S = 4;
  CHECK_THROWS_AS(join_candidates(lat, met), Error);
}

TEST_CASE("candidate evaluation is reproducible and thread independent") {
  std::mt19937_64 rng(3);
  const Network net = mcdsim::testing::random_network(rng, 2, false);
  EvalSet eval;
  EvalSet ood;
  for (int i = 0; i < 6; ++i) {
    eval.inputs.push_back(mcdsim::testing::random_float(rng, net.spec.input_shape));
    eval.targets.push_back(i % static_cast<int>(net.spec.num_classes()));
    ood.inputs.push_back(mcdsim::testing::random_float(rng, net.spec.input_shape, -3, 3));
  }
  eval.K = ood.K = net.spec.num_classes();
  const std::vector<std::size_t> Ls{1, 2}, Ss{3, 5};
  const std::vector<std::uint64_t> seeds{1, 2};
  EvalOptions one, four;
  four.threads = 4;
  const auto a = evaluate_candidates(net, eval, ood, Ls, Ss, seeds, one);
  const auto b = evaluate_candidates(net, eval, ood, Ls, Ss, seeds, four);
  CHECK(a == b);
  CHECK(a.size() == 4);
}
