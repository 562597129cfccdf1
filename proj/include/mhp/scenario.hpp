#pragma once

// Scenario = network + demand + signalized intersections + run settings.
//
// Scenario file (JSON):
//
//   {
//     "name": "net1x2",
//     "network": "net1x2.network.json",       // path relative to this file, or an inline object
//     "horizon_s": 7200, "dt_s": 1,
//     "cycle_s": 90, "lost_time_s": 4, "min_green_s": 10,
//     "maxpressure_period_s": 10,
//     "queue_includes_virtual": true,
//     "demand_scale": 1.0,
//     "intersections": [
//       { "id": "I1", "phases": [ { "label": "EB", "links": ["EB1"] },
//                                 { "label": "SB", "links": ["SB1_in"], "min_green_s": 10 } ] }
//     ],
//     "demand": [
//       { "origin": "EB1", "label": "EB",
//         "profile": [ { "start_min": 0, "end_min": 30, "vph": 1800 }, ... ] }
//     ]
//   }

#include "mhp/network.hpp"
#include "mhp/pressure.hpp"

#include <json.hpp>

#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace mhp::sim {

using net::LinkIndex;

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DemandInterval {
  double start_s = 0.0;
  double end_s = 0.0;
  double rate_vph = 0.0;
};

struct DemandProfile {
  LinkIndex origin = 0;
  std::string label;
  std::vector<DemandInterval> intervals;

  double rate_at(double t) const;
  /// Mean rate over [0, until_s).
  double mean_rate(double until_s) const;
};

struct Intersection {
  std::string id;
  std::vector<pressure::Phase> phases;

  /// Incoming links of all phases, in phase order.
  std::vector<LinkIndex> incoming_links() const;
};

struct Scenario {
  std::string name;
  std::shared_ptr<const net::ExtendedGraph> graph;
  std::shared_ptr<const net::TransitionMatrix> transition;
  std::vector<DemandProfile> demands;
  std::vector<Intersection> intersections;
  double horizon_s = 7200.0;
  double dt_s = 1.0;
  double cycle_s = 90.0;
  double lost_time_s = 4.0;
  double maxpressure_period_s = 10.0;
  /// Origin links report their virtual queue as part of their measured queue.
  bool queue_includes_virtual = true;
  /// Hash of the source documents, for run manifests.
  std::string source_hash;

  /// Throws ScenarioError on any inconsistency.
  void validate() const;
  /// Phase index and intersection of a link, if signalized.
  std::optional<std::pair<std::size_t, std::size_t>> phase_of(LinkIndex l) const;
  /// Returns a copy with every demand rate multiplied by `factor`.
  Scenario scaled(double factor, std::string new_name) const;
};

Scenario parse_scenario(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
Scenario load_scenario_file(const std::filesystem::path& path);

/// Builds the derived pieces (extended graph, transition matrix) from a
/// validated link graph.
std::shared_ptr<const net::ExtendedGraph> make_extended(const net::LinkGraph& g);

}  // namespace mhp::sim
