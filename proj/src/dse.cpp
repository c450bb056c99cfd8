#include "mcdsim/dse.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "mcdsim/error.hpp"
#include "mcdsim/parallel.hpp"
#include "mcdsim/rng.hpp"

namespace mcdsim {

const char* to_string(OptMode mode) {
  switch (mode) {
    case OptMode::Latency: return "opt-latency";
    case OptMode::Accuracy: return "opt-accuracy";
    case OptMode::Uncertainty: return "opt-uncertainty";
    case OptMode::Confidence: return "opt-confidence";
  }
  return "?";
}

OptMode parse_opt_mode(const std::string& s) {
  for (OptMode m : {OptMode::Latency, OptMode::Accuracy, OptMode::Uncertainty, OptMode::Confidence}) {
    if (s == to_string(m) || s == std::string(to_string(m)).substr(4)) return m;
  }
  throw Error("unknown optimization mode \"" + s + "\"");
}

std::vector<std::size_t> default_l_domain(std::size_t n) {
  if (n == 0) throw Error("network has no weight layers");
  // Nearest integer to num/den, ties upward.
  const auto round_ratio = [](std::size_t num, std::size_t den) { return (2 * num + den) / (2 * den); };
  std::vector<std::size_t> d{1, round_ratio(n, 3), round_ratio(n, 2), round_ratio(2 * n, 3), n};
  for (auto& v : d) v = std::clamp<std::size_t>(v, 1, n);
  std::sort(d.begin(), d.end());
  d.erase(std::unique(d.begin(), d.end()), d.end());
  return d;
}

std::vector<std::size_t> default_s_domain() { return {3, 4, 5, 6, 7, 8, 9, 10, 20, 50, 100}; }

HwConfig optimize_hardware(const NetworkSpec& net, const ResourceBudget& budget,
                           const HwDomains& domains, const HwConfig& base) {
  std::optional<HwConfig> best;
  const auto key = [](const HwConfig& h) {
    return std::tuple(h.PC * h.PF * h.PV, h.PF, h.PC, h.PV);
  };
  std::optional<std::pair<HwConfig, ResourceEstimate>> smallest;
  for (std::size_t pc : domains.PC) {
    for (std::size_t pf : domains.PF) {
      for (std::size_t pv : domains.PV) {
        HwConfig hw = base;
        hw.PC = pc;
        hw.PF = pf;
        hw.PV = pv;
        hw.validate();
        const ResourceEstimate est = resource_estimate(net, hw);
        if (!smallest || std::pair(est.dsp, est.mem_total_bits) <
                             std::pair(smallest->second.dsp, smallest->second.mem_total_bits)) {
          smallest = std::pair(hw, est);
        }
        if (!fits(est, budget)) continue;
        if (!best || key(hw) > key(*best)) best = hw;
      }
    }
  }
  if (!best) {
    std::ostringstream os;
    os << "no hardware configuration fits the budget (dsp " << budget.dsp_total << ", mem "
       << budget.mem_total_bits << " bits)";
    if (smallest) {
      os << "; smallest point PC=" << smallest->first.PC << " PF=" << smallest->first.PF
         << " PV=" << smallest->first.PV << " needs dsp " << smallest->second.dsp << ", mem "
         << smallest->second.mem_total_bits << " bits";
    }
    throw InfeasibleError(os.str());
  }
  return *best;
}

std::vector<LookupEntry> build_lookup_table(const NetworkSpec& net, const HwConfig& hw,
                                            std::span<const std::size_t> L_domain,
                                            std::span<const std::size_t> S_domain, bool ic,
                                            const LatencyCalibration& cal) {
  if (L_domain.empty() || S_domain.empty()) throw Error("lookup table: empty L or S domain");
  std::vector<LookupEntry> table;
  for (std::size_t L : L_domain) {
    for (std::size_t S : S_domain) table.push_back({L, S, network_latency(net, hw, L, S, ic, cal)});
  }
  return table;
}

namespace {

std::pair<double, double> mean_std(const std::vector<double>& v) {
  const auto n = static_cast<double>(v.size());
  const double m = pairwise_sum(v) / n;
  if (v.size() < 2) return {m, 0.0};
  std::vector<double> sq(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) sq[i] = (v[i] - m) * (v[i] - m);
  return {m, std::sqrt(pairwise_sum(sq) / (n - 1.0))};
}

constexpr std::uint64_t kOodStream = 0x00D5EED5ULL;

}  // namespace

std::vector<MetricEntry> evaluate_candidates(const Network& net, const EvalSet& eval,
                                             const EvalSet& ood, std::span<const std::size_t> L_domain,
                                             std::span<const std::size_t> S_domain,
                                             std::span<const std::uint64_t> seeds,
                                             const EvalOptions& opts) {
  if (eval.inputs.empty() || ood.inputs.empty()) throw Error("evaluate: evaluation sets must be nonempty");
  if (eval.targets.size() != eval.inputs.size()) throw Error("evaluate: evaluation set needs targets");
  if (seeds.empty()) throw Error("evaluate: at least one seed is required");
  const double p = effective_dropout_p(net.spec, opts.p);

  std::vector<QuantTensor> eval_q, ood_q;
  for (const auto& x : eval.inputs) eval_q.push_back(quantize_input(net.spec, x));
  for (const auto& x : ood.inputs) ood_q.push_back(quantize_input(net.spec, x));

  std::vector<std::pair<std::size_t, std::size_t>> points;
  for (std::size_t L : L_domain) {
    for (std::size_t S : S_domain) points.emplace_back(L, S);
  }
  std::vector<MetricEntry> table(points.size());
  parallel_for(points.size(), opts.threads, [&](std::size_t idx) {
    const auto [L, S] = points[idx];
    const McdConfig cfg{L, S, p};
    std::vector<double> accs, apes, eces;
    for (std::uint64_t seed : seeds) {
      const auto run = [&](const std::vector<QuantTensor>& inputs, std::uint64_t stream) {
        std::vector<std::vector<double>> probs;
        for (std::size_t e = 0; e < inputs.size(); ++e) {
          auto sampler = make_sampler(p, opts.sipo_width, opts.fifo_depth, derive_seed(seed ^ stream, e));
          probs.push_back(predict_with_ic(net, inputs[e], cfg, sampler).mean_probs);
        }
        return probs;
      };
      const auto eval_probs = run(eval_q, 0);
      const auto ood_probs = run(ood_q, kOodStream);
      accs.push_back(accuracy(eval_probs, eval.targets));
      eces.push_back(expected_calibration_error(eval_probs, eval.targets));
      apes.push_back(average_predictive_entropy(ood_probs));
    }
    MetricEntry m{L, S};
    std::tie(m.accuracy_pct, m.accuracy_std) = mean_std(accs);
    std::tie(m.ape_nats, m.ape_std) = mean_std(apes);
    std::tie(m.ece_pct, m.ece_std) = mean_std(eces);
    table[idx] = m;
  });
  return table;
}

std::vector<DseCandidate> join_candidates(std::span<const LookupEntry> latencies,
                                          std::span<const MetricEntry> metrics) {
  std::map<std::pair<std::size_t, std::size_t>, const MetricEntry*> by_key;
  for (const auto& m : metrics) by_key[{m.L, m.S}] = &m;
  std::vector<DseCandidate> out;
  for (const auto& l : latencies) {
    const auto it = by_key.find({l.L, l.S});
    if (it == by_key.end()) {
      throw Error("no metrics for L=" + std::to_string(l.L) + ", S=" + std::to_string(l.S));
    }
    const MetricEntry& m = *it->second;
    out.push_back({l.L, l.S, l.latency.latency_ms, m.accuracy_pct, m.ape_nats, m.ece_pct,
                   m.accuracy_std, m.ape_std, m.ece_std});
  }
  return out;
}

std::vector<std::string> violations(const DseCandidate& c, const MinRequirements& req) {
  std::vector<std::string> v;
  if (req.max_latency_ms && c.latency_ms > *req.max_latency_ms) v.emplace_back("max_latency_ms");
  if (req.min_accuracy_pct && c.accuracy_pct < *req.min_accuracy_pct) v.emplace_back("min_accuracy_pct");
  if (req.min_ape_nats && c.ape_nats < *req.min_ape_nats) v.emplace_back("min_ape_nats");
  if (req.max_ece_pct && c.ece_pct > *req.max_ece_pct) v.emplace_back("max_ece_pct");
  return v;
}

namespace {

// Larger is better.
double objective(const DseCandidate& c, OptMode mode) {
  switch (mode) {
    case OptMode::Latency: return -c.latency_ms;
    case OptMode::Accuracy: return c.accuracy_pct;
    case OptMode::Uncertainty: return c.ape_nats;
    case OptMode::Confidence: return -c.ece_pct;
  }
  return 0.0;
}

bool better(const DseCandidate& a, const DseCandidate& b, OptMode mode) {
  const double oa = objective(a, mode), ob = objective(b, mode);
  if (oa != ob) return oa > ob;
  if (a.latency_ms != b.latency_ms) return a.latency_ms < b.latency_ms;
  if (a.S != b.S) return a.S < b.S;
  return a.L < b.L;
}

}  // namespace

DseResult select(std::span<const DseCandidate> candidates, const DseRequest& request) {
  if (candidates.empty()) throw Error("select: no candidates");
  DseResult r;
  r.all_candidates.assign(candidates.begin(), candidates.end());
  std::map<std::string, std::size_t> counts;
  std::optional<DseCandidate> best;
  for (const auto& c : candidates) {
    auto v = violations(c, request.min_requirements);
    if (!v.empty()) {
      for (const auto& name : v) ++counts[name];
      r.filtered_out.push_back({c, std::move(v)});
      continue;
    }
    if (!best || better(c, *best, request.mode)) best = c;
  }
  if (!best) {
    std::ostringstream os;
    os << "all " << candidates.size() << " candidates violate the minimal requirements:";
    for (const auto& [name, n] : counts) os << ' ' << name << '=' << n;
    throw InfeasibleError(os.str());
  }
  r.chosen = *best;
  return r;
}

}  // namespace mcdsim
