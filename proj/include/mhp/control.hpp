#pragma once

// Interface between the simulator and signal controllers.

#include "mhp/network.hpp"
#include "mhp/scenario.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mhp::sim {

enum class DecisionKind {
  CycleSplits,  // splits for the next cycle; next decision at the cycle end
  ActivePhase,  // one phase for the next period; next decision at the period end
};

struct ControlDecision {
  std::size_t intersection = 0;
  DecisionKind kind = DecisionKind::CycleSplits;
  std::vector<double> splits;  // fractions of cycle_s, one per phase
  double cycle_s = 0.0;
  std::size_t active_phase = 0;
  double period_s = 0.0;
};

/// Throws std::invalid_argument unless the decision fits the intersection:
/// split count matches the phases, splits sum to 1 within 1e-9, and every
/// phase gets at least its min green.
void validate_decision(const Scenario& scenario, const ControlDecision& decision);

struct DecisionContext {
  const Scenario& scenario;
  std::size_t intersection;
  double time_s;
  const net::QueueSnapshot& queues;
};

class Controller {
 public:
  virtual ~Controller() = default;
  virtual std::string name() const = 0;

  /// Called once before the first decision of an episode.
  virtual void reset(const Scenario& /*scenario*/, std::uint64_t /*seed*/) {}

  virtual ControlDecision decide(const DecisionContext& ctx) = 0;

  /// Called once after the last simulation step with the final queues.
  virtual void episode_end(const Scenario& /*scenario*/, double /*time_s*/,
                           const net::QueueSnapshot& /*queues*/) {}
};

}  // namespace mhp::sim
