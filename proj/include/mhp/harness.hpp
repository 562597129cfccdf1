#pragma once

// Scenario catalog, seeded replications, result tables and diagnostics.

#include "mhp/control.hpp"
#include "mhp/mesosim.hpp"
#include "mhp/rl/agent.hpp"
#include "mhp/scenario.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace mhp::harness {

enum class HarnessErrorKind { UnknownScenario, UnknownController, EmptyWindow, DegenerateVariance, InsufficientSamples };

class HarnessError : public std::runtime_error {
 public:
  HarnessError(HarnessErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  HarnessErrorKind kind() const noexcept { return kind_; }

 private:
  HarnessErrorKind kind_;
};

/// Directory holding the catalog files: $MHP_SCENARIO_DIR, else the source
/// tree's scenarios/ directory.
std::filesystem::path scenario_dir();

/// Demand levels as multiples of the heavy profile.
inline constexpr double kUnderScale = 0.5;
inline constexpr double kSlightScale = 0.75;

/// Catalog names: <network>-<level> with network in {net1x2, net1x3,
/// net1x3-allsb} and level in {under, slight, heavy}.
std::vector<std::string> catalog_names();
sim::Scenario load_scenario(const std::string& name);

/// Catalog name, or a path to a scenario JSON file.
sim::Scenario resolve_scenario(const std::string& name_or_path);

struct ControllerSpec {
  std::string kind = "webster";  // webster | maxpressure | greedy | fixed | rl
  int hop = 0;
  std::shared_ptr<const rl::PolicySet> policy;  // kind == rl

  std::string label() const;
};

std::unique_ptr<sim::Controller> make_controller(const ControllerSpec& spec);

struct EpisodeSummary {
  std::uint64_t seed = 0;
  double tts_h = 0.0;
  double queue_h = 0.0;
  double virtual_h = 0.0;
  std::uint64_t generated = 0;
  std::uint64_t exited = 0;
  double reward = 0.0;  // rl only
};

struct Stat {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1); 0 for n < 2
};
Stat summarize(const std::vector<double>& v);

struct ResultRow {
  std::string scenario;
  std::string method;
  int hop = 0;
  Stat tts_h, queue_h, virtual_h;
  std::vector<EpisodeSummary> episodes;  // in seed order
};

std::vector<std::uint64_t> default_seeds(std::size_t n = 10);

/// Runs one episode per seed on the worker pool and aggregates. Any episode
/// error propagates and no row is produced. `logs` receives the full
/// metrics per seed when non-null.
ResultRow evaluate(const sim::Scenario& scenario, const ControllerSpec& spec, const std::vector<std::uint64_t>& seeds,
                   std::size_t threads = 0, std::vector<sim::MetricsLog>* logs = nullptr);

void write_result_table_csv(std::ostream& os, const std::vector<ResultRow>& rows);
void write_per_seed_csv(std::ostream& os, const std::vector<ResultRow>& rows);
void write_metrics_csv(std::ostream& os, const std::vector<EpisodeSummary>& episodes);
/// Per-decision queue trace (time column, then one column per link).
void write_queue_trace_csv(std::ostream& os, const sim::Scenario& scenario, const sim::MetricsLog& log);

/// Time-weighted mean split per phase over [t0, t1).
struct SplitSummary {
  std::vector<double> mean_splits;
  double ratio(std::size_t a, std::size_t b) const;
};
SplitSummary split_report(const sim::MetricsLog& log, std::size_t intersection, double t0_s, double t1_s);

/// Pearson correlation. Needs >= 10 pairs (InsufficientSamples) and
/// non-constant series (DegenerateVariance).
double pearson(const std::vector<double>& x, const std::vector<double>& y);
void write_scatter_csv(std::ostream& os, const std::vector<double>& reward, const std::vector<double>& tts);

struct HopRow {
  int hop = 0;
  Stat tts_h;
  std::vector<double> per_seed;
};
/// One row per ResultRow, ordered by hop.
std::vector<HopRow> tts_vs_hop(const std::vector<ResultRow>& rows);
void write_hop_csv(std::ostream& os, const std::vector<HopRow>& rows);

/// Run manifest: tool version, scenario identity, seeds, configuration and
/// the command line.
nlohmann::json make_manifest(const std::string& command, const sim::Scenario& scenario,
                             const std::vector<std::uint64_t>& seeds, const nlohmann::json& config);
void write_manifest(const std::filesystem::path& path, const nlohmann::json& manifest);

const char* version();

}  // namespace mhp::harness
