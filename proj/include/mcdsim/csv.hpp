#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mcdsim/dse.hpp"
#include "mcdsim/metrics.hpp"

namespace mcdsim::csv {

/// Shortest representation that parses back to the same double.
std::string format_double(double v);
double parse_double(std::string_view s);

/// Header row plus data rows; fields are separated by commas, no quoting.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index by name, or -1.
  int column(std::string_view name) const;
};

Table parse(std::string_view text);

std::string emit_lookup_table(std::span<const LookupEntry> table);
std::vector<LookupEntry> parse_lookup_table(std::string_view text);

/// Columns L,S,accuracy_pct,ape_nats,ece_pct are required; *_std are optional.
std::string emit_metric_table(std::span<const MetricEntry> table);
std::vector<MetricEntry> parse_metric_table(std::string_view text);

/// Candidate rows with a feasibility column and the violated bounds.
std::string emit_candidates(std::span<const DseCandidate> candidates, const MinRequirements& req);
std::vector<DseCandidate> parse_candidates(std::string_view text);

std::string emit_bins(std::span<const CalibrationBin> bins);
std::vector<CalibrationBin> parse_bins(std::string_view text);

}  // namespace mcdsim::csv
