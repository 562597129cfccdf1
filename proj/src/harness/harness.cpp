#include "mhp/harness.hpp"

#include "mhp/controllers.hpp"
#include "mhp/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <ostream>
#include <thread>

#ifndef MHP_VERSION
#define MHP_VERSION "0.0.0"
#endif
#ifndef MHP_SCENARIO_DIR
#define MHP_SCENARIO_DIR "scenarios"
#endif

namespace mhp::harness {

namespace {
const std::vector<std::pair<std::string, double>>& levels() {
  static const std::vector<std::pair<std::string, double>> l = {
      {"under", kUnderScale}, {"slight", kSlightScale}, {"heavy", 1.0}};
  return l;
}
const std::vector<std::string>& networks() {
  static const std::vector<std::string> n = {"net1x2", "net1x3", "net1x3-allsb"};
  return n;
}
}  // namespace

const char* version() { return MHP_VERSION; }

std::filesystem::path scenario_dir() {
  if (const char* env = std::getenv("MHP_SCENARIO_DIR"); env && *env) return env;
  return MHP_SCENARIO_DIR;
}

std::vector<std::string> catalog_names() {
  std::vector<std::string> out;
  for (const auto& n : networks())
    for (const auto& [level, scale] : levels()) out.push_back(n + "-" + level);
  return out;
}

sim::Scenario load_scenario(const std::string& name) {
  for (const auto& n : networks()) {
    for (const auto& [level, scale] : levels()) {
      if (name != n + "-" + level) continue;
      const auto base = sim::load_scenario_file(scenario_dir() / (n + ".scenario.json"));
      return base.scaled(scale, name);
    }
  }
  throw HarnessError(HarnessErrorKind::UnknownScenario, "UnknownScenario: '" + name + "'");
}

sim::Scenario resolve_scenario(const std::string& name_or_path) {
  const auto names = catalog_names();
  if (std::find(names.begin(), names.end(), name_or_path) != names.end()) return load_scenario(name_or_path);
  if (std::filesystem::exists(name_or_path)) return sim::load_scenario_file(name_or_path);
  throw HarnessError(HarnessErrorKind::UnknownScenario,
                     "UnknownScenario: '" + name_or_path + "' is neither a catalog name nor a file");
}

std::string ControllerSpec::label() const {
  if (kind == "webster" || kind == "fixed") return kind;
  return kind + "-h" + std::to_string(hop);
}

std::unique_ptr<sim::Controller> make_controller(const ControllerSpec& spec) {
  if (spec.kind == "webster") return std::make_unique<ctl::WebsterController>();
  if (spec.kind == "maxpressure") return std::make_unique<ctl::MaxPressureController>(spec.hop);
  if (spec.kind == "greedy") return std::make_unique<ctl::GreedySplitController>(spec.hop);
  if (spec.kind == "fixed") return std::make_unique<ctl::FixedSplitController>();
  if (spec.kind == "rl") {
    if (!spec.policy) throw std::invalid_argument("controller rl needs a trained policy");
    return std::make_unique<rl::RlController>(spec.policy, false, 0);
  }
  throw HarnessError(HarnessErrorKind::UnknownController, "unknown controller '" + spec.kind + "'");
}

Stat summarize(const std::vector<double>& v) {
  Stat s;
  if (v.empty()) return s;
  const double n = static_cast<double>(v.size());
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / (n - 1.0));
  }
  return s;
}

std::vector<std::uint64_t> default_seeds(std::size_t n) {
  std::vector<std::uint64_t> s(n);
  std::iota(s.begin(), s.end(), 0);
  return s;
}

ResultRow evaluate(const sim::Scenario& scenario, const ControllerSpec& spec, const std::vector<std::uint64_t>& seeds,
                   std::size_t threads, std::vector<sim::MetricsLog>* logs) {
  std::vector<EpisodeSummary> eps(seeds.size());
  std::vector<sim::MetricsLog> all(logs ? seeds.size() : 0);
  parallel_for(
      seeds.size(),
      [&](std::size_t k) {
        auto c = make_controller(spec);
        auto m = sim::run_episode(scenario, *c, seeds[k]);
        EpisodeSummary& e = eps[k];
        e.seed = seeds[k];
        e.tts_h = m.total_time_spent_h;
        e.queue_h = m.total_queue_time_h;
        e.virtual_h = m.total_virtual_queue_time_h;
        e.generated = m.generated;
        e.exited = m.exited;
        if (auto* r = dynamic_cast<rl::RlController*>(c.get())) e.reward = r->episode_reward();
        if (logs) all[k] = std::move(m);
      },
      threads);
  ResultRow row;
  row.scenario = scenario.name;
  row.method = spec.kind;
  row.hop = spec.hop;
  std::vector<double> t, q, v;
  for (const auto& e : eps) {
    t.push_back(e.tts_h);
    q.push_back(e.queue_h);
    v.push_back(e.virtual_h);
  }
  row.tts_h = summarize(t);
  row.queue_h = summarize(q);
  row.virtual_h = summarize(v);
  row.episodes = std::move(eps);
  if (logs) *logs = std::move(all);
  return row;
}

void write_result_table_csv(std::ostream& os, const std::vector<ResultRow>& rows) {
  os.precision(12);
  os << "scenario,method,hop,n,tts_h_mean,tts_h_std,queue_h_mean,queue_h_std,virtual_h_mean,virtual_h_std\n";
  for (const auto& r : rows)
    os << r.scenario << ',' << r.method << ',' << r.hop << ',' << r.episodes.size() << ',' << r.tts_h.mean << ','
       << r.tts_h.std << ',' << r.queue_h.mean << ',' << r.queue_h.std << ',' << r.virtual_h.mean << ','
       << r.virtual_h.std << '\n';
}

void write_per_seed_csv(std::ostream& os, const std::vector<ResultRow>& rows) {
  os.precision(17);
  os << "scenario,method,hop,seed,tts_h,queue_h,virtual_h,generated,exited,reward\n";
  for (const auto& r : rows)
    for (const auto& e : r.episodes)
      os << r.scenario << ',' << r.method << ',' << r.hop << ',' << e.seed << ',' << e.tts_h << ',' << e.queue_h << ','
         << e.virtual_h << ',' << e.generated << ',' << e.exited << ',' << e.reward << '\n';
}

void write_metrics_csv(std::ostream& os, const std::vector<EpisodeSummary>& episodes) {
  os.precision(17);
  os << "seed,tts_h,queue_h,virtual_h,generated,exited,reward\n";
  for (const auto& e : episodes)
    os << e.seed << ',' << e.tts_h << ',' << e.queue_h << ',' << e.virtual_h << ',' << e.generated << ',' << e.exited
       << ',' << e.reward << '\n';
}

void write_queue_trace_csv(std::ostream& os, const sim::Scenario& scenario, const sim::MetricsLog& log) {
  const auto& g = *scenario.graph;
  os << "time_s";
  for (std::size_t l = 0; l < g.real_link_count(); ++l) os << ',' << g.name(l);
  os << '\n';
  for (std::size_t k = 0; k < log.queue_trace.size(); ++k) {
    os << log.trace_times_s[k];
    for (std::size_t l = 0; l < g.real_link_count(); ++l) os << ',' << log.queue_trace[k][l];
    os << '\n';
  }
}

double SplitSummary::ratio(std::size_t a, std::size_t b) const {
  const double d = mean_splits.at(b);
  return d > 0.0 ? mean_splits.at(a) / d : std::numeric_limits<double>::infinity();
}

SplitSummary split_report(const sim::MetricsLog& log, std::size_t intersection, double t0, double t1) {
  SplitSummary out;
  double weight = 0.0;
  for (const auto& rec : log.splits) {
    if (rec.intersection != intersection) continue;
    const double a = std::max(t0, rec.start_s);
    const double b = std::min(t1, rec.start_s + rec.duration_s);
    if (b <= a) continue;
    if (out.mean_splits.empty()) out.mean_splits.assign(rec.splits.size(), 0.0);
    for (std::size_t p = 0; p < rec.splits.size(); ++p) out.mean_splits[p] += (b - a) * rec.splits[p];
    weight += b - a;
  }
  if (weight <= 0.0)
    throw HarnessError(HarnessErrorKind::EmptyWindow, "EmptyWindow: no split records for intersection " +
                                                          std::to_string(intersection) + " in the window");
  for (double& v : out.mean_splits) v /= weight;
  return out;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("pearson: series lengths differ");
  if (x.size() < 10)
    throw HarnessError(HarnessErrorKind::InsufficientSamples,
                       "InsufficientSamples: need at least 10 pairs, got " + std::to_string(x.size()));
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0)
    throw HarnessError(HarnessErrorKind::DegenerateVariance, "DegenerateVariance: a series is constant");
  return sxy / std::sqrt(sxx * syy);
}

void write_scatter_csv(std::ostream& os, const std::vector<double>& reward, const std::vector<double>& tts) {
  os.precision(17);
  os << "episode,reward,tts_h\n";
  for (std::size_t i = 0; i < reward.size() && i < tts.size(); ++i) os << i << ',' << reward[i] << ',' << tts[i] << '\n';
}

std::vector<HopRow> tts_vs_hop(const std::vector<ResultRow>& rows) {
  std::vector<HopRow> out;
  for (const auto& r : rows) {
    HopRow h;
    h.hop = r.hop;
    h.tts_h = r.tts_h;
    for (const auto& e : r.episodes) h.per_seed.push_back(e.tts_h);
    out.push_back(std::move(h));
  }
  std::stable_sort(out.begin(), out.end(), [](const HopRow& a, const HopRow& b) { return a.hop < b.hop; });
  return out;
}

void write_hop_csv(std::ostream& os, const std::vector<HopRow>& rows) {
  os.precision(12);
  os << "hop,n,tts_h_mean,tts_h_std\n";
  for (const auto& r : rows) os << r.hop << ',' << r.per_seed.size() << ',' << r.tts_h.mean << ',' << r.tts_h.std << '\n';
}

nlohmann::json make_manifest(const std::string& command, const sim::Scenario& scenario,
                             const std::vector<std::uint64_t>& seeds, const nlohmann::json& config) {
  nlohmann::json m;
  m["tool"] = "mhp";
  m["version"] = version();
  m["command"] = command;
  m["scenario"] = {{"name", scenario.name}, {"source_hash", scenario.source_hash}, {"horizon_s", scenario.horizon_s},
                   {"dt_s", scenario.dt_s}};
  m["seeds"] = seeds;
  m["config"] = config;
  m["threads"] = worker_count();
#if defined(__VERSION__)
  m["compiler"] = __VERSION__;
#endif
  return m;
}

void write_manifest(const std::filesystem::path& path, const nlohmann::json& manifest) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << manifest.dump(2) << '\n';
}

}  // namespace mhp::harness
