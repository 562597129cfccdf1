#pragma once

// Non-learning signal controllers: fixed-time Webster, MaxPressure phase
// activation and a multi-hop greedy split rule.

#include "mhp/control.hpp"
#include "mhp/pressure.hpp"
#include "mhp/scenario.hpp"

#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mhp::ctl {

using sim::ControlDecision;
using sim::Controller;
using sim::DecisionContext;
using sim::Scenario;

/// Fixed-time plan. green_s are effective greens; each phase interval lasts
/// green_s[i] + lost_per_phase_s.
struct FixedPlan {
  double cycle_s = 0.0;
  std::vector<double> green_s;
  double lost_per_phase_s = 0.0;
  bool oversaturated = false;  // Y was clamped

  std::vector<double> splits() const;
};

inline constexpr double kWebsterMaxY = 0.95;
inline constexpr double kWebsterMinCycle = 30.0;
inline constexpr double kWebsterMaxCycle = 180.0;

/// Webster's cycle C = (1.5 L + 5) / (1 - Y), Y clamped at 0.95 and C clamped
/// to [30, 180]; effective greens (C - L) y_i / Y, floored at min_green_s
/// with the remainder shared in proportion to y_i. L is the total lost time
/// per cycle, split evenly across phases.
FixedPlan webster_plan(std::span<const double> critical_flows_vph, double sat_flow_vph,
                       double lost_time_s, double min_green_s = 0.0);
FixedPlan webster_plan_ratios(std::span<const double> flow_ratios, double lost_time_s,
                              double min_green_s = 0.0);

/// Splits proportional to `weights` (negatives clipped to 0) with per-phase
/// lower bounds. Phases whose share falls below their floor are fixed at the
/// floor and the free mass is shared among the rest. All-zero weights give
/// equal splits, then floors.
std::vector<double> floor_splits(std::span<const double> weights, std::span<const double> floors);

/// min_green / cycle per phase of an intersection.
std::vector<double> split_floors(const Scenario& scenario, std::size_t intersection, double cycle_s);

/// Mean arrival rate per link (vph) over the demand period, propagated
/// through the turning ratios. Indexed like the extended graph (supersink 0).
std::vector<double> historical_link_flows(const Scenario& scenario);

class WebsterController final : public Controller {
 public:
  std::string name() const override { return "webster"; }
  void reset(const Scenario& scenario, std::uint64_t seed) override;
  ControlDecision decide(const DecisionContext& ctx) override;
  const std::vector<FixedPlan>& plans() const noexcept { return plans_; }

 private:
  std::vector<FixedPlan> plans_;
};

class MaxPressureController final : public Controller {
 public:
  explicit MaxPressureController(int hop = 0) : hop_(hop) {}
  std::string name() const override { return "maxpressure"; }
  void reset(const Scenario& scenario, std::uint64_t seed) override;
  ControlDecision decide(const DecisionContext& ctx) override;

  /// argmax with ties to the lowest index.
  static std::size_t choose(std::span<const double> phase_pressures);

 private:
  int hop_;
  std::shared_ptr<const pressure::PressureEngine> engine_;
  const net::TransitionMatrix* engine_for_ = nullptr;
};

class GreedySplitController final : public Controller {
 public:
  explicit GreedySplitController(int hop = 0) : hop_(hop) {}
  std::string name() const override { return "greedy"; }
  void reset(const Scenario& scenario, std::uint64_t seed) override;
  ControlDecision decide(const DecisionContext& ctx) override;

 private:
  int hop_;
  std::shared_ptr<const pressure::PressureEngine> engine_;
  const net::TransitionMatrix* engine_for_ = nullptr;
};

/// Fixed splits every cycle (equal splits when empty).
class FixedSplitController final : public Controller {
 public:
  explicit FixedSplitController(std::vector<double> splits = {}) : splits_(std::move(splits)) {}
  std::string name() const override { return "fixed"; }
  ControlDecision decide(const DecisionContext& ctx) override;

 private:
  std::vector<double> splits_;
};

/// Per-phase pressures of an intersection at hop h.
std::vector<double> phase_pressures(const pressure::PressureEngine& engine, const Scenario& scenario,
                                    std::size_t intersection, const net::QueueSnapshot& q, int h);

}  // namespace mhp::ctl
