#include "mcdsim/csv.hpp"

#include <charconv>
#include <sstream>

#include "mcdsim/error.hpp"

namespace mcdsim::csv {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

double parse_double(std::string_view s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error("csv: bad number \"" + std::string(s) + "\"");
  }
  return v;
}

namespace {

std::size_t parse_size(std::string_view s) {
  std::size_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error("csv: bad integer \"" + std::string(s) + "\"");
  }
  return v;
}

std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

const std::string& field(const Table& t, const std::vector<std::string>& row, std::string_view name) {
  const int c = t.column(name);
  if (c < 0) throw Error("csv: missing column \"" + std::string(name) + "\"");
  return row.at(static_cast<std::size_t>(c));
}

double optional_double(const Table& t, const std::vector<std::string>& row, std::string_view name) {
  const int c = t.column(name);
  return c < 0 ? 0.0 : parse_double(row.at(static_cast<std::size_t>(c)));
}

}  // namespace

int Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

Table parse(std::string_view text) {
  Table t;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    auto fields = split(line);
    if (t.header.empty()) {
      t.header = std::move(fields);
    } else {
      if (fields.size() != t.header.size()) {
        throw Error("csv line " + std::to_string(line_no) + ": expected " +
                    std::to_string(t.header.size()) + " fields, got " + std::to_string(fields.size()));
      }
      t.rows.push_back(std::move(fields));
    }
  }
  if (t.header.empty()) throw Error("csv: empty document");
  return t;
}

std::string emit_lookup_table(std::span<const LookupEntry> table) {
  std::ostringstream os;
  os << "L,S,cycles_prefix,cycles_suffix,cycles,ms\n";
  for (const auto& e : table) {
    os << e.L << ',' << e.S << ',' << e.latency.cycles_prefix << ',' << e.latency.cycles_suffix << ','
       << e.latency.total_cycles << ',' << format_double(e.latency.latency_ms) << '\n';
  }
  return os.str();
}

std::vector<LookupEntry> parse_lookup_table(std::string_view text) {
  const Table t = parse(text);
  std::vector<LookupEntry> out;
  for (const auto& row : t.rows) {
    LookupEntry e;
    e.L = parse_size(field(t, row, "L"));
    e.S = parse_size(field(t, row, "S"));
    e.latency.cycles_prefix = parse_size(field(t, row, "cycles_prefix"));
    e.latency.cycles_suffix = parse_size(field(t, row, "cycles_suffix"));
    e.latency.total_cycles = parse_size(field(t, row, "cycles"));
    e.latency.latency_ms = parse_double(field(t, row, "ms"));
    out.push_back(e);
  }
  return out;
}

std::string emit_metric_table(std::span<const MetricEntry> table) {
  std::ostringstream os;
  os << "L,S,accuracy_pct,accuracy_std,ape_nats,ape_std,ece_pct,ece_std\n";
  for (const auto& m : table) {
    os << m.L << ',' << m.S << ',' << format_double(m.accuracy_pct) << ',' << format_double(m.accuracy_std)
       << ',' << format_double(m.ape_nats) << ',' << format_double(m.ape_std) << ','
       << format_double(m.ece_pct) << ',' << format_double(m.ece_std) << '\n';
  }
  return os.str();
}

std::vector<MetricEntry> parse_metric_table(std::string_view text) {
  const Table t = parse(text);
  std::vector<MetricEntry> out;
  for (const auto& row : t.rows) {
    MetricEntry m;
    m.L = parse_size(field(t, row, "L"));
    m.S = parse_size(field(t, row, "S"));
    m.accuracy_pct = parse_double(field(t, row, "accuracy_pct"));
    m.ape_nats = parse_double(field(t, row, "ape_nats"));
    m.ece_pct = parse_double(field(t, row, "ece_pct"));
    m.accuracy_std = optional_double(t, row, "accuracy_std");
    m.ape_std = optional_double(t, row, "ape_std");
    m.ece_std = optional_double(t, row, "ece_std");
    out.push_back(m);
  }
  return out;
}

std::string emit_candidates(std::span<const DseCandidate> candidates, const MinRequirements& req) {
  std::ostringstream os;
  os << "L,S,latency_ms,accuracy_pct,accuracy_std,ape_nats,ape_std,ece_pct,ece_std,feasible,violations\n";
  for (const auto& c : candidates) {
    const auto v = violations(c, req);
    os << c.L << ',' << c.S << ',' << format_double(c.latency_ms) << ',' << format_double(c.accuracy_pct)
       << ',' << format_double(c.accuracy_std) << ',' << format_double(c.ape_nats) << ','
       << format_double(c.ape_std) << ',' << format_double(c.ece_pct) << ',' << format_double(c.ece_std)
       << ',' << (v.empty() ? 1 : 0) << ',';
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? ";" : "") << v[i];
    os << '\n';
  }
  return os.str();
}

std::vector<DseCandidate> parse_candidates(std::string_view text) {
  const Table t = parse(text);
  std::vector<DseCandidate> out;
  for (const auto& row : t.rows) {
    DseCandidate c;
    c.L = parse_size(field(t, row, "L"));
    c.S = parse_size(field(t, row, "S"));
    c.latency_ms = parse_double(field(t, row, "latency_ms"));
    c.accuracy_pct = parse_double(field(t, row, "accuracy_pct"));
    c.ape_nats = parse_double(field(t, row, "ape_nats"));
    c.ece_pct = parse_double(field(t, row, "ece_pct"));
    c.accuracy_std = optional_double(t, row, "accuracy_std");
    c.ape_std = optional_double(t, row, "ape_std");
    c.ece_std = optional_double(t, row, "ece_std");
    out.push_back(c);
  }
  return out;
}

std::string emit_bins(std::span<const CalibrationBin> bins) {
  std::ostringstream os;
  os << "lo,hi,count,mean_confidence,mean_accuracy\n";
  for (const auto& b : bins) {
    os << format_double(b.lo) << ',' << format_double(b.hi) << ',' << b.count << ','
       << format_double(b.mean_confidence) << ',' << format_double(b.mean_accuracy) << '\n';
  }
  return os.str();
}

std::vector<CalibrationBin> parse_bins(std::string_view text) {
  const Table t = parse(text);
  std::vector<CalibrationBin> out;
  for (const auto& row : t.rows) {
    CalibrationBin b;
    b.lo = parse_double(field(t, row, "lo"));
    b.hi = parse_double(field(t, row, "hi"));
    b.count = parse_size(field(t, row, "count"));
    b.mean_confidence = parse_double(field(t, row, "mean_confidence"));
    b.mean_accuracy = parse_double(field(t, row, "mean_accuracy"));
    out.push_back(b);
  }
  return out;
}

}  // namespace mcdsim::csv
