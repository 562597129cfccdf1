#pragma once

// Discrete-time store-and-forward traffic simulator.
//
// Each link holds two FIFO buffers: vehicles travelling toward the stop line
// (they arrive after the link's free-flow time) and vehicles queued at the
// stop line. Queued vehicles leave through a green stop line at the link's
// saturation flow, subject to storage space on their next link. A vehicle
// draws its next link from the turning ratios when it enters a link. Demand
// arrives as a Poisson stream into an unbounded virtual queue per origin and
// enters the origin link when space is available. Exit links release
// vehicles to the supersink on arrival at their downstream end.

#include "mhp/control.hpp"
#include "mhp/network.hpp"
#include "mhp/scenario.hpp"

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

namespace mhp::sim {

class SimError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Signal timing for every intersection.
///
/// A phase interval discharges only after its first lost_time_s seconds when
/// it follows a different phase (clearance and start-up loss).
class SignalState {
 public:
  explicit SignalState(const Scenario& scenario);

  void apply(const ControlDecision& decision, double start_s);

  /// True if link l may discharge during [t, t + dt).
  bool discharging(net::LinkIndex l, double t) const;
  /// Phase showing green at time t, if a plan covers t.
  std::optional<std::size_t> active_phase(std::size_t intersection, double t) const;
  /// End of the current decision epoch.
  double epoch_end(std::size_t intersection) const;

 private:
  struct Interval {
    std::size_t phase;
    double start_s;
    double end_s;
    double discharge_from_s;
  };
  struct Plan {
    std::vector<Interval> intervals;
    double epoch_end_s = 0.0;
    std::optional<std::size_t> last_phase;
  };

  const Scenario* scenario_;
  std::vector<Plan> plans_;
  // link -> (intersection, phase); npos for unsignalized links
  std::vector<std::pair<std::size_t, std::size_t>> control_;
};

struct Vehicle {
  double created_s = 0.0;
  double entered_s = -1.0;  // first entry into the network, -1 while virtual
  double exited_s = -1.0;
  double queued_s = 0.0;    // stop-line and virtual queue time
  double virtual_s = 0.0;
  net::LinkIndex origin = 0;
  net::LinkIndex link = 0;
  net::LinkIndex next = 0;  // drawn on entry; meaningless on exit links
  double arrive_s = 0.0;    // time the vehicle reaches the stop line
};

struct LinkState {
  std::deque<std::uint32_t> moving;
  std::deque<std::uint32_t> queue;
  double budget = 0.0;  // saturation-flow accumulator
  std::size_t count() const noexcept { return moving.size() + queue.size(); }
};

struct OriginState {
  std::size_t demand = 0;  // index into Scenario::demands
  net::LinkIndex link = 0;
  std::deque<std::uint32_t> virtual_queue;
  std::mt19937_64 rng;  // arrivals
};

struct SimState {
  double clock_s = 0.0;
  std::vector<LinkState> links;
  std::vector<OriginState> origins;
  std::vector<Vehicle> ledger;
  std::uint64_t generated = 0;
  std::uint64_t exited = 0;
  double tts_s = 0.0;
  double queue_s = 0.0;
  double virtual_s = 0.0;
  /// Turning draws, one stream per link. Arrival and routing streams are
  /// independent so that controllers compared on one seed see the same
  /// demand realisation.
  std::vector<std::mt19937_64> route_rng;

  std::uint64_t in_network() const;
  std::uint64_t in_virtual() const;
  /// Deterministic digest of the full state.
  std::uint64_t hash() const;
};

struct SplitRecord {
  std::size_t intersection = 0;
  double start_s = 0.0;
  double duration_s = 0.0;
  std::vector<double> splits;

  bool operator==(const SplitRecord&) const = default;
};

struct MetricsLog {
  double total_time_spent_h = 0.0;
  double total_queue_time_h = 0.0;
  double total_virtual_queue_time_h = 0.0;
  std::uint64_t generated = 0;
  std::uint64_t exited = 0;
  std::uint64_t remaining = 0;
  double horizon_s = 0.0;
  /// Per decision-step measured queues (index_order); filled when tracing.
  std::vector<double> trace_times_s;
  std::vector<std::vector<double>> queue_trace;
  std::vector<SplitRecord> splits;

  bool operator==(const MetricsLog&) const = default;
};

class Simulator {
 public:
  /// Throws ScenarioError (InvalidScenario) if the scenario fails validation.
  Simulator(const Scenario& scenario, std::uint64_t seed);

  const SimState& state() const noexcept { return state_; }
  const Scenario& scenario() const noexcept { return *scenario_; }

  /// Advances the clock by dt. Throws SimError on a broken internal invariant.
  void step(const SignalState& signals, double dt);

  net::QueueSnapshot measure_queues() const;
  /// Per-link vehicles on the link (moving + queued), real links only.
  std::vector<std::size_t> occupancy() const;

  /// Vehicle time summed over the per-vehicle ledger (exit or current clock
  /// minus creation). Equals state().tts_s.
  double ledger_time_spent_s() const;
  double ledger_queue_time_s() const;

  MetricsLog metrics() const;

 private:
  void enter_link(std::uint32_t vid, net::LinkIndex l, double t);
  net::LinkIndex draw_next(net::LinkIndex l);
  void check_conservation() const;

  const Scenario* scenario_;
  SimState state_;
  std::vector<double> ff_s_;
};

struct EpisodeOptions {
  bool trace_queues = false;
  /// Called after every simulation step.
  std::function<void(const Simulator&)> on_step;
};

/// Runs 0..horizon, asking the controller for a decision whenever an
/// intersection's epoch ends. Vehicles still in the system at the horizon
/// accrue time until the horizon only.
MetricsLog run_episode(const Scenario& scenario, Controller& controller, std::uint64_t seed,
                       const EpisodeOptions& options = {});

}  // namespace mhp::sim
