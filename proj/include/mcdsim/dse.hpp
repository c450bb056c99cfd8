#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mcdsim/engine.hpp"
#include "mcdsim/metrics.hpp"
#include "mcdsim/perfmodel.hpp"

namespace mcdsim {

enum class OptMode { Latency, Accuracy, Uncertainty, Confidence };

const char* to_string(OptMode mode);
OptMode parse_opt_mode(const std::string& s);

struct MinRequirements {
  std::optional<double> max_latency_ms;
  std::optional<double> min_accuracy_pct;
  std::optional<double> min_ape_nats;
  std::optional<double> max_ece_pct;
};

struct DseCandidate {
  std::size_t L = 0;
  std::size_t S = 0;
  double latency_ms = 0.0;
  double accuracy_pct = 0.0;
  double ape_nats = 0.0;
  double ece_pct = 0.0;
  // Spread over repeated seeds; zero when a single run was used.
  double accuracy_std = 0.0;
  double ape_std = 0.0;
  double ece_std = 0.0;

  friend bool operator==(const DseCandidate&, const DseCandidate&) = default;
};

struct DseRequest {
  ResourceBudget budget;
  OptMode mode = OptMode::Latency;
  MinRequirements min_requirements;
  std::vector<std::size_t> L_domain;
  std::vector<std::size_t> S_domain;
};

struct FilteredCandidate {
  DseCandidate candidate;
  std::vector<std::string> violations;
};

struct DseResult {
  HwConfig chosen_hw;
  DseCandidate chosen;
  std::vector<DseCandidate> all_candidates;
  std::vector<FilteredCandidate> filtered_out;
  std::string metrics_provenance;  // "computed" or "supplied"
};

/// {1, N/3, N/2, 2N/3, N} rounded to the nearest layer count (ties up),
/// deduplicated and ascending.
std::vector<std::size_t> default_l_domain(std::size_t n_weight_layers);
std::vector<std::size_t> default_s_domain();

struct HwDomains {
  std::vector<std::size_t> PC{std::begin(kChannelFilterDomain), std::end(kChannelFilterDomain)};
  std::vector<std::size_t> PF{std::begin(kChannelFilterDomain), std::end(kChannelFilterDomain)};
  std::vector<std::size_t> PV{std::begin(kVectorDomain), std::end(kVectorDomain)};
};

/// Maximizes PC*PF*PV over the fitting domain points; ties prefer larger PF,
/// then PC, then PV. DW, D and the clock come from `base`.
HwConfig optimize_hardware(const NetworkSpec& net, const ResourceBudget& budget,
                           const HwDomains& domains = {}, const HwConfig& base = {});

struct LookupEntry {
  std::size_t L = 0;
  std::size_t S = 0;
  LatencyEstimate latency;
};

/// The performance lookup table: one latency per (L, S).
std::vector<LookupEntry> build_lookup_table(const NetworkSpec& net, const HwConfig& hw,
                                            std::span<const std::size_t> L_domain,
                                            std::span<const std::size_t> S_domain, bool ic,
                                            const LatencyCalibration& cal = {});

struct MetricEntry {
  std::size_t L = 0;
  std::size_t S = 0;
  double accuracy_pct = 0.0, accuracy_std = 0.0;
  double ape_nats = 0.0, ape_std = 0.0;
  double ece_pct = 0.0, ece_std = 0.0;

  friend bool operator==(const MetricEntry&, const MetricEntry&) = default;
};

struct EvalOptions {
  std::optional<double> p;
  std::size_t sipo_width = 64;
  std::size_t fifo_depth = 16;
  std::size_t threads = 1;
};

/// Runs predict_with_ic over the evaluation set (accuracy, ECE) and the OOD
/// set (aPE) for every (L, S), repeated per seed; mean and sample std.
/// Each example gets its own sampler seeded from (seed, example index), so
/// results do not depend on the thread count.
std::vector<MetricEntry> evaluate_candidates(const Network& net, const EvalSet& eval,
                                             const EvalSet& ood, std::span<const std::size_t> L_domain,
                                             std::span<const std::size_t> S_domain,
                                             std::span<const std::uint64_t> seeds,
                                             const EvalOptions& opts = {});

/// Joins latencies and metrics on (L, S); a pair missing from either side is an error.
std::vector<DseCandidate> join_candidates(std::span<const LookupEntry> latencies,
                                          std::span<const MetricEntry> metrics);

/// Bounds `c` violates, one description per bound.
std::vector<std::string> violations(const DseCandidate& c, const MinRequirements& req);

/// Filters by the minimal requirements, then picks the best survivor for the
/// mode; ties go to lower latency, then lower S, then lower L. Throws
/// InfeasibleError with per-bound counts when nothing survives.
DseResult select(std::span<const DseCandidate> candidates, const DseRequest& request);

}  // namespace mcdsim
