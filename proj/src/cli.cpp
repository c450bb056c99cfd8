#include "mcdsim/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mcdsim/csv.hpp"
#include "mcdsim/dse.hpp"
#include "mcdsim/engine.hpp"
#include "mcdsim/error.hpp"
#include "mcdsim/metrics.hpp"
#include "mcdsim/network_io.hpp"
#include "mcdsim/parallel.hpp"
#include "mcdsim/perfmodel.hpp"
#include "mcdsim/rng.hpp"
#include "mcdsim/sampler.hpp"
#include "mcdsim/tensor_io.hpp"

namespace mcdsim::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GlobalOptions {
  std::uint64_t seed = 0;
  std::string output_dir;
  std::string format;  // empty: the subcommand's natural format
  std::size_t threads = 1;
};

// Writes a named artifact into --output-dir, or to stdout without one.
class Sink {
 public:
  Sink(const GlobalOptions& g, std::ostream& out) : dir_(g.output_dir), out_(out) {
    if (!dir_.empty()) fs::create_directories(dir_);
  }

  void emit(const std::string& name, const std::string& content) {
    if (dir_.empty()) {
      out_ << content;
      return;
    }
    std::ofstream f(fs::path(dir_) / name, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write " + (fs::path(dir_) / name).string());
    f << content;
  }

  bool to_files() const { return !dir_.empty(); }

 private:
  std::string dir_;
  std::ostream& out_;
};

template <class T>
std::vector<T> parse_list(const std::string& s, const char* what) {
  std::vector<T> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(item, &used);
    } catch (const std::exception&) {
      throw UsageError(std::string("bad value in ") + what + ": \"" + item + "\"");
    }
    if (used != item.size() || v < 0) throw UsageError(std::string("bad value in ") + what + ": \"" + item + "\"");
    out.push_back(static_cast<T>(v));
  }
  if (out.empty()) throw UsageError(std::string(what) + " is empty");
  return out;
}

HwConfig load_hw(const std::string& path) {
  HwConfig hw;
  if (path.empty()) return hw;
  const std::string text = read_text_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(path + ": parse error at " + describe_text_position(text, e.byte));
  }
  static const char* known[] = {"PC", "PF", "PV", "DW", "D", "clock_mhz"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(std::begin(known), std::end(known), key) == std::end(known)) {
      throw Error(path + ": unknown hardware field \"" + key + "\"");
    }
  }
  hw.PC = j.value("PC", hw.PC);
  hw.PF = j.value("PF", hw.PF);
  hw.PV = j.value("PV", hw.PV);
  hw.DW = j.value("DW", hw.DW);
  hw.D = j.value("D", hw.D);
  hw.clock_mhz = j.value("clock_mhz", hw.clock_mhz);
  hw.validate();
  return hw;
}

json hw_to_json(const HwConfig& hw) {
  return {{"PC", hw.PC}, {"PF", hw.PF}, {"PV", hw.PV}, {"DW", hw.DW}, {"D", hw.D}, {"clock_mhz", hw.clock_mhz}};
}

std::string join_double(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ";" : "") + csv::format_double(v[i]);
  return s;
}

// ---------------------------------------------------------------------------
// infer
// ---------------------------------------------------------------------------

struct InferOptions {
  std::string model, input, hw;
  std::size_t L = 0, S = 10;
  std::optional<double> p;
  bool ic = true;
  bool strict_mem = false;
  std::optional<std::uint64_t> cache_budget_bits;
};

int run_infer(const InferOptions& o, const GlobalOptions& g, std::ostream& out, std::ostream& err) {
  const Network net = load_network(o.model);
  const TensorSet inputs = read_tensor_set(o.input);
  const HwConfig hw = load_hw(o.hw);
  const McdConfig cfg{o.L == 0 ? net.spec.weight_layer_count() : o.L, o.S,
                      effective_dropout_p(net.spec, o.p)};
  cfg.validate(net.spec);
  IcOptions ic_opts{o.cache_budget_bits, o.strict_mem};

  std::vector<PredictiveResult> results(inputs.tensors.size());
  parallel_for(results.size(), g.threads, [&](std::size_t i) {
    const QuantTensor x = quantize_input(net.spec, inputs.tensors[i]);
    auto sampler = make_sampler(*cfg.p, hw.PF, hw.D, derive_seed(g.seed, i));
    results[i] = o.ic ? predict_with_ic(net, x, cfg, sampler, ic_opts) : predict(net, x, cfg, sampler);
  });
  for (const auto& r : results) {
    for (const auto& w : r.warnings) err << "mcdsim: warning: " << w << '\n';
  }

  Sink sink(g, out);
  if (g.format == "csv") {
    std::ostringstream os;
    os << "input,sample,probs\n";
    for (std::size_t i = 0; i < results.size(); ++i) {
      os << i << ",mean," << join_double(results[i].mean_probs) << '\n';
      for (std::size_t s = 0; s < results[i].per_sample.size(); ++s) {
        os << i << ',' << s << ',' << join_double(results[i].per_sample[s].probs) << '\n';
      }
    }
    sink.emit("result.csv", os.str());
    return kExitOk;
  }
  json arr = json::array();
  for (std::size_t i = 0; i < results.size(); ++i) {
    json samples = json::array();
    for (const auto& s : results[i].per_sample) samples.push_back(s.probs);
    arr.push_back({{"index", i},
                   {"mean_probs", results[i].mean_probs},
                   {"per_sample", samples},
                   {"masks_consumed", results[i].mask_decisions}});
  }
  json j = {{"L", cfg.L}, {"S", cfg.S}, {"p", *cfg.p}, {"seed", g.seed}, {"inputs", arr}};
  sink.emit("result.json", j.dump(2) + "\n");
  return kExitOk;
}

// ---------------------------------------------------------------------------
// sample-lfsr
// ---------------------------------------------------------------------------

struct LfsrOptions {
  unsigned n_reg = 16;
  std::string taps = "16,15,13,4";
  unsigned k = 2;
  std::size_t count = 64;
  std::size_t width = 1;
  bool raw = false;
};

std::string hex_word(const MaskWord& w) {
  // Bit j of the word is bit j of the printed integer.
  std::string hex;
  const std::size_t nibbles = (w.width() + 3) / 4;
  for (std::size_t n = nibbles; n-- > 0;) {
    unsigned v = 0;
    for (std::size_t b = 0; b < 4; ++b) {
      const std::size_t j = n * 4 + b;
      if (j < w.width() && w.keep(j)) v |= 1u << b;
    }
    hex += "0123456789abcdef"[v];
  }
  return hex;
}

int run_sample_lfsr(const LfsrOptions& o, const GlobalOptions& g, std::ostream& out) {
  const auto taps = parse_list<unsigned>(o.taps, "--taps");
  std::ostringstream os;
  if (o.raw) {
    Lfsr lfsr(LfsrSpec{o.n_reg, taps, g.seed});
    for (std::size_t i = 0; i < o.count; ++i) os << lfsr.step() << '\n';
  } else {
    SamplerConfig cfg;
    cfg.k = o.k;
    cfg.n_reg = o.n_reg;
    cfg.taps = taps;
    cfg.seed = g.seed;
    cfg.sipo_width = o.width;
    BernoulliSampler sampler(cfg);
    for (std::size_t i = 0; i < o.count; ++i) {
      if (o.width == 1) {
        os << sampler.draw_drop_bit() << '\n';
      } else {
        os << hex_word(sampler.fill_mask_word()) << '\n';
      }
    }
  }
  Sink sink(g, out);
  sink.emit("lfsr.txt", os.str());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// perf-table
// ---------------------------------------------------------------------------

struct PerfOptions {
  std::string model, hw, s_domain, l_domain;
  bool ic = true;
  double latency_factor = 1.0;
  double latency_overhead_ms = 0.0;
};

std::vector<std::size_t> l_domain_or_default(const std::string& s, const NetworkSpec& net) {
  return s.empty() ? default_l_domain(net.weight_layer_count()) : parse_list<std::size_t>(s, "--L-domain");
}

std::vector<std::size_t> s_domain_or_default(const std::string& s) {
  return s.empty() ? default_s_domain() : parse_list<std::size_t>(s, "--S-domain");
}

int run_perf_table(const PerfOptions& o, const GlobalOptions& g, std::ostream& out) {
  const Network net = load_network(o.model);
  const HwConfig hw = load_hw(o.hw);
  const auto table = build_lookup_table(net.spec, hw, l_domain_or_default(o.l_domain, net.spec),
                                        s_domain_or_default(o.s_domain), o.ic,
                                        {o.latency_factor, o.latency_overhead_ms});
  Sink sink(g, out);
  if (g.format == "text") {
    json arr = json::array();
    for (const auto& e : table) {
      arr.push_back({{"L", e.L}, {"S", e.S}, {"cycles", e.latency.total_cycles}, {"ms", e.latency.latency_ms}});
    }
    const auto est = resource_estimate(net.spec, hw);
    json j = {{"hw", hw_to_json(hw)},
              {"ic", o.ic},
              {"resources",
               {{"dsp", est.dsp},
                {"mem_fifo_bits", est.mem_fifo_bits},
                {"mem_in_bits", est.mem_in_bits},
                {"mem_weight_bits", est.mem_weight_bits},
                {"mem_total_bits", est.mem_total_bits}}},
              {"table", arr}};
    sink.emit("perf_table.json", j.dump(2) + "\n");
  } else {
    sink.emit("perf_table.csv", csv::emit_lookup_table(table));
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

std::vector<std::vector<double>> read_predictions(const std::string& path) {
  const std::string text = read_text_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(path + ": parse error at " + describe_text_position(text, e.byte));
  }
  const json* list = nullptr;
  if (j.is_object() && j.contains("predictions")) list = &j.at("predictions");
  if (j.is_object() && j.contains("inputs")) list = &j.at("inputs");
  if (j.is_array()) list = &j;
  if (!list) throw Error(path + ": expected a \"predictions\" list");
  std::vector<std::vector<double>> probs;
  try {
    for (const auto& p : *list) {
      if (p.contains("mean_probs")) {
        probs.push_back(p.at("mean_probs").get<std::vector<double>>());
        continue;
      }
      const auto samples = p.at("per_sample").get<std::vector<std::vector<double>>>();
      if (samples.empty()) throw Error(path + ": prediction without samples");
      std::vector<double> mean(samples.front().size(), 0.0);
      for (std::size_t k = 0; k < mean.size(); ++k) {
        double s = 0.0;
        for (const auto& row : samples) {
          if (row.size() != mean.size()) throw Error(path + ": samples differ in class count");
          s += row[k];
        }
        mean[k] = s / static_cast<double>(samples.size());
      }
      probs.push_back(std::move(mean));
    }
  } catch (const json::exception& e) {
    throw Error(path + ": " + e.what());
  }
  if (probs.empty()) throw Error(path + ": no predictions");
  return probs;
}

std::vector<int> read_targets(const std::string& path) {
  const std::string text = read_text_file(path);
  try {
    const json j = json::parse(text);
    return j.is_array() ? j.get<std::vector<int>>() : j.at("targets").get<std::vector<int>>();
  } catch (const json::parse_error& e) {
    throw Error(path + ": parse error at " + describe_text_position(text, e.byte));
  } catch (const json::exception& e) {
    throw Error(path + ": " + e.what());
  }
}

struct MetricsOptions {
  std::string predictions, targets, ood_predictions, bins_csv;
  std::size_t bins = 10;
};

int run_metrics(const MetricsOptions& o, const GlobalOptions& g, std::ostream& out) {
  const auto probs = read_predictions(o.predictions);
  const auto targets = read_targets(o.targets);
  std::vector<std::vector<double>> ood;
  if (!o.ood_predictions.empty()) ood = read_predictions(o.ood_predictions);
  const MetricsReport r = compute_metrics(probs, targets, ood, o.bins);
  Sink sink(g, out);
  if (g.format == "csv") {
    sink.emit("bins.csv", csv::emit_bins(r.per_bin));
    return kExitOk;
  }
  json bins = json::array();
  for (const auto& b : r.per_bin) {
    bins.push_back({{"lo", b.lo},
                    {"hi", b.hi},
                    {"count", b.count},
                    {"mean_confidence", b.mean_confidence},
                    {"mean_accuracy", b.mean_accuracy}});
  }
  json j = {{"accuracy_pct", r.accuracy_pct},
            {"ape_nats", r.ape_nats},
            {"ece_pct", r.ece_pct},
            {"n_bins", r.n_bins},
            {"per_bin", bins}};
  sink.emit("metrics.json", j.dump(2) + "\n");
  if (!o.bins_csv.empty()) {
    std::ofstream f(o.bins_csv);
    if (!f) throw Error("cannot write " + o.bins_csv);
    f << csv::emit_bins(r.per_bin);
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// dse
// ---------------------------------------------------------------------------

struct DseOptions {
  std::string model, budget, mode = "opt-latency", metrics_csv, eval_dir, seeds, hw, candidates_csv;
  std::string l_domain, s_domain;
  std::optional<double> max_latency_ms, min_acc, min_ape, max_ece;
  std::optional<double> p;
  bool ic = true;
};

json candidate_json(const DseCandidate& c) {
  return {{"L", c.L},
          {"S", c.S},
          {"latency_ms", c.latency_ms},
          {"accuracy_pct", c.accuracy_pct},
          {"accuracy_std", c.accuracy_std},
          {"ape_nats", c.ape_nats},
          {"ape_std", c.ape_std},
          {"ece_pct", c.ece_pct},
          {"ece_std", c.ece_std}};
}

int run_dse(const DseOptions& o, const GlobalOptions& g, std::ostream& out) {
  const auto budget_parts = parse_list<std::uint64_t>(o.budget, "--budget");
  if (budget_parts.size() != 2) throw UsageError("--budget expects <dsp>,<mem-bits>");
  DseRequest req;
  req.budget = {budget_parts[0], budget_parts[1]};
  req.mode = parse_opt_mode(o.mode);
  req.min_requirements = {o.max_latency_ms, o.min_acc, o.min_ape, o.max_ece};
  if (o.metrics_csv.empty() == o.eval_dir.empty()) {
    throw UsageError("dse needs exactly one of --metrics-csv or --eval-dir");
  }

  const Network net = load_network(o.model);
  req.L_domain = l_domain_or_default(o.l_domain, net.spec);
  req.S_domain = s_domain_or_default(o.s_domain);

  const HwConfig hw = optimize_hardware(net.spec, req.budget, {}, load_hw(o.hw));
  const auto table = build_lookup_table(net.spec, hw, req.L_domain, req.S_domain, o.ic);

  std::vector<MetricEntry> metrics;
  std::string provenance;
  if (!o.metrics_csv.empty()) {
    metrics = csv::parse_metric_table(read_text_file(o.metrics_csv));
    provenance = "supplied";
  } else {
    const fs::path dir(o.eval_dir);
    const TensorSet eval_set = read_tensor_set(dir / "eval.json");
    if (!eval_set.targets) throw Error((dir / "eval.json").string() + ": evaluation set needs targets");
    EvalSet eval{eval_set.tensors, *eval_set.targets, net.spec.num_classes()};
    EvalSet ood;
    if (fs::exists(dir / "ood.json")) {
      ood.inputs = read_tensor_set(dir / "ood.json").tensors;
    } else {
      const auto [mean, stddev] = elementwise_mean_std(eval.inputs);
      ood = gaussian_noise_set(eval.inputs.size(), net.spec.input_shape, mean, stddev,
                               derive_seed(g.seed, 0x0D));
    }
    const std::vector<std::uint64_t> seeds =
        o.seeds.empty() ? std::vector<std::uint64_t>{g.seed} : parse_list<std::uint64_t>(o.seeds, "--seeds");
    metrics = evaluate_candidates(net, eval, ood, req.L_domain, req.S_domain, seeds,
                                  {o.p, hw.PF, hw.D, g.threads});
    provenance = "computed";
  }

  const auto candidates = join_candidates(table, metrics);
  Sink sink(g, out);
  const std::string candidates_csv = csv::emit_candidates(candidates, req.min_requirements);
  if (!o.candidates_csv.empty()) {
    std::ofstream f(o.candidates_csv);
    if (!f) throw Error("cannot write " + o.candidates_csv);
    f << candidates_csv;
  }
  if (sink.to_files()) sink.emit("candidates.csv", candidates_csv);

  DseResult r = select(candidates, req);  // throws InfeasibleError
  r.chosen_hw = hw;
  r.metrics_provenance = provenance;

  if (g.format == "csv") {
    sink.emit("candidates.csv", candidates_csv);
    return kExitOk;
  }
  json filtered = json::array();
  for (const auto& f : r.filtered_out) {
    json c = candidate_json(f.candidate);
    c["violations"] = f.violations;
    filtered.push_back(std::move(c));
  }
  json j = {{"mode", to_string(req.mode)},
            {"chosen_hw", hw_to_json(r.chosen_hw)},
            {"chosen", candidate_json(r.chosen)},
            {"candidates", r.all_candidates.size()},
            {"filtered_out", filtered},
            {"metrics_provenance", r.metrics_provenance},
            {"ic", o.ic}};
  sink.emit("dse.json", j.dump(2) + "\n");
  return kExitOk;
}

// ---------------------------------------------------------------------------
// quantize
// ---------------------------------------------------------------------------

struct QuantizeOptions {
  std::string float_model, calibration;
};

int run_quantize(const QuantizeOptions& o, const GlobalOptions& g, std::ostream& out) {
  if (g.output_dir.empty()) throw UsageError("quantize requires --output-dir");
  if (o.calibration.empty()) throw Error("quantize: calibration data is required (--calibration)");
  fs::path manifest(o.float_model);
  if (fs::is_directory(manifest)) manifest /= "manifest.json";
  const FloatNetwork fnet = load_float_network(manifest);
  const TensorSet calib = read_tensor_set(o.calibration);
  const Network net = quantize_network(fnet, calib.tensors);
  const fs::path written = save_network(net, g.output_dir);
  out << written.filename().string() << '\n';
  return kExitOk;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Monte Carlo Dropout accelerator model: inference, sampler, performance and DSE tools",
               "mcdsim"};
  app.require_subcommand(0, 1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--seed", g.seed, "Seed for every random stream");
  app.add_option("--output-dir", g.output_dir, "Write artifacts into this directory instead of stdout");
  app.add_option("--format", g.format, "Output format")->check(CLI::IsMember({"text", "csv"}));
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);

  InferOptions infer;
  auto* infer_cmd = app.add_subcommand("infer", "Run MCD inference on one or more inputs");
  infer_cmd->add_option("--model", infer.model, "Quantized manifest")->required()->check(CLI::ExistingFile);
  infer_cmd->add_option("--input", infer.input, "Input tensor file")->required()->check(CLI::ExistingFile);
  infer_cmd->add_option("--L", infer.L, "Bayesian weight layers (default N)");
  infer_cmd->add_option("--S", infer.S, "Stochastic passes")->check(CLI::PositiveNumber);
  infer_cmd->add_option("--p", infer.p, "Dropout probability (2^-k)");
  infer_cmd->add_option("--hw", infer.hw, "Hardware config (PF sets the mask word width)");
  infer_cmd->add_flag("--ic,!--no-ic", infer.ic, "Intermediate-layer caching (default on)");
  infer_cmd->add_flag("--strict-mem", infer.strict_mem, "Fail when the IC cache exceeds its budget");
  infer_cmd->add_option("--cache-budget-bits", infer.cache_budget_bits, "On-chip budget for the IC cache");

  LfsrOptions lfsr;
  auto* lfsr_cmd = app.add_subcommand("sample-lfsr", "Emit Bernoulli sampler output");
  lfsr_cmd->add_option("--n-reg", lfsr.n_reg, "Shift registers per chain");
  lfsr_cmd->add_option("--taps", lfsr.taps, "Comma-separated tap positions");
  lfsr_cmd->add_option("--k", lfsr.k, "ANDed chains (p = 2^-k)");
  lfsr_cmd->add_option("--count", lfsr.count, "Lines to emit");
  lfsr_cmd->add_option("--width", lfsr.width, "1: drop bits; >1: keep-mask words in hex")->check(CLI::PositiveNumber);
  lfsr_cmd->add_flag("--raw", lfsr.raw, "Single LFSR output seeded with --seed verbatim");

  PerfOptions perf;
  auto* perf_cmd = app.add_subcommand("perf-table", "Emit the (L, S) latency lookup table");
  perf_cmd->add_option("--model", perf.model, "Quantized manifest")->required()->check(CLI::ExistingFile);
  perf_cmd->add_option("--hw", perf.hw, "Hardware config file");
  perf_cmd->add_option("--S-domain", perf.s_domain, "Comma-separated S values");
  perf_cmd->add_option("--L-domain", perf.l_domain, "Comma-separated L values");
  perf_cmd->add_flag("--ic,!--no-ic", perf.ic, "Model intermediate-layer caching (default on)");
  perf_cmd->add_option("--latency-factor", perf.latency_factor, "Calibration factor");
  perf_cmd->add_option("--latency-overhead-ms", perf.latency_overhead_ms, "Calibration overhead");

  MetricsOptions met;
  auto* met_cmd = app.add_subcommand("metrics", "Accuracy, aPE and ECE of a predictions file");
  met_cmd->add_option("--predictions", met.predictions, "Predictions file")->required()->check(CLI::ExistingFile);
  met_cmd->add_option("--targets", met.targets, "Targets file")->required()->check(CLI::ExistingFile);
  met_cmd->add_option("--ood-predictions", met.ood_predictions, "Predictions on OOD inputs for aPE")
      ->check(CLI::ExistingFile);
  met_cmd->add_option("--bins-csv", met.bins_csv, "Also write the per-bin table here");
  met_cmd->add_option("--bins", met.bins, "ECE bins")->check(CLI::PositiveNumber);

  DseOptions dse;
  auto* dse_cmd = app.add_subcommand("dse", "Explore {L, S, PC, PF, PV} under constraints");
  dse_cmd->add_option("--model", dse.model, "Quantized manifest")->required()->check(CLI::ExistingFile);
  dse_cmd->add_option("--budget", dse.budget, "<dsp>,<mem-bits>")->required();
  dse_cmd->add_option("--mode", dse.mode, "opt-latency|opt-accuracy|opt-uncertainty|opt-confidence");
  dse_cmd->add_option("--max-latency-ms", dse.max_latency_ms);
  dse_cmd->add_option("--min-acc", dse.min_acc);
  dse_cmd->add_option("--min-ape", dse.min_ape);
  dse_cmd->add_option("--max-ece", dse.max_ece);
  dse_cmd->add_option("--metrics-csv", dse.metrics_csv, "External metrics table")->check(CLI::ExistingFile);
  dse_cmd->add_option("--eval-dir", dse.eval_dir, "Directory with eval.json [and ood.json]")
      ->check(CLI::ExistingDirectory);
  dse_cmd->add_option("--seeds", dse.seeds, "Comma-separated evaluation seeds");
  dse_cmd->add_option("--hw", dse.hw, "Base hardware config (D, DW, clock)");
  dse_cmd->add_option("--p", dse.p, "Dropout probability (2^-k)");
  dse_cmd->add_option("--L-domain", dse.l_domain);
  dse_cmd->add_option("--S-domain", dse.s_domain);
  dse_cmd->add_option("--candidates-csv", dse.candidates_csv, "Write the candidates table here");
  dse_cmd->add_flag("--ic,!--no-ic", dse.ic, "Model intermediate-layer caching (default on)");

  QuantizeOptions quant;
  auto* quant_cmd = app.add_subcommand("quantize", "Quantize a float32 model to an int8 manifest");
  quant_cmd->add_option("--float-model", quant.float_model, "Float manifest or its directory")->required();
  quant_cmd->add_option("--calibration", quant.calibration, "Calibration tensor file");

  if (argc <= 1) {
    err << app.help();
    return kExitUsage;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "mcdsim: usage error: " << one_line(e.what()) << '\n';
    return kExitUsage;
  }

  try {
    if (infer_cmd->parsed()) return run_infer(infer, g, out, err);
    if (lfsr_cmd->parsed()) return run_sample_lfsr(lfsr, g, out);
    if (perf_cmd->parsed()) return run_perf_table(perf, g, out);
    if (met_cmd->parsed()) return run_metrics(met, g, out);
    if (dse_cmd->parsed()) return run_dse(dse, g, out);
    if (quant_cmd->parsed()) return run_quantize(quant, g, out);
    err << app.help();
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "mcdsim: usage error: " << one_line(e.what()) << '\n';
    return kExitUsage;
  } catch (const InfeasibleError& e) {
    err << "mcdsim: infeasible: " << one_line(e.what()) << '\n';
    return kExitInfeasible;
  } catch (const std::exception& e) {
    err << "mcdsim: error: " << one_line(e.what()) << '\n';
    return kExitData;
  }
}

}  // namespace mcdsim::cli
