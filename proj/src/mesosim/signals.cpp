#include "mhp/mesosim.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace mhp::sim {

namespace {
constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
constexpr double kTimeEps = 1e-9;
}  // namespace

void validate_decision(const Scenario& scenario, const ControlDecision& d) {
  if (d.intersection >= scenario.intersections.size())
    throw std::invalid_argument("decision for unknown intersection " + std::to_string(d.intersection));
  const auto& x = scenario.intersections[d.intersection];
  if (d.kind == DecisionKind::ActivePhase) {
    if (d.active_phase >= x.phases.size()) throw std::invalid_argument("active phase out of range");
    if (!(d.period_s > 0.0)) throw std::invalid_argument("control period must be > 0");
    return;
  }
  if (d.splits.size() != x.phases.size())
    throw std::invalid_argument("intersection '" + x.id + "' expects " +
                                std::to_string(x.phases.size()) + " splits, got " +
                                std::to_string(d.splits.size()));
  if (!(d.cycle_s > 0.0)) throw std::invalid_argument("cycle length must be > 0");
  const double sum = std::accumulate(d.splits.begin(), d.splits.end(), 0.0);
  if (std::abs(sum - 1.0) > 1e-9) {
    std::ostringstream os;
    os.precision(15);
    os << "splits of '" << x.id << "' sum to " << sum;
    throw std::invalid_argument(os.str());
  }
  for (std::size_t p = 0; p < d.splits.size(); ++p) {
    if (!std::isfinite(d.splits[p]) || d.splits[p] * d.cycle_s < x.phases[p].min_green_s - 1e-6)
      throw std::invalid_argument("phase '" + x.phases[p].label + "' of '" + x.id +
                                  "' gets less than its minimum green");
  }
}

SignalState::SignalState(const Scenario& scenario)
    : scenario_(&scenario), plans_(scenario.intersections.size()),
      control_(scenario.graph->size(), {kNone, kNone}) {
  for (std::size_t i = 0; i < scenario.intersections.size(); ++i)
    for (std::size_t p = 0; p < scenario.intersections[i].phases.size(); ++p)
      for (auto l : scenario.intersections[i].phases[p].incoming_links) control_[l] = {i, p};
}

void SignalState::apply(const ControlDecision& d, double start_s) {
  validate_decision(*scenario_, d);
  Plan& plan = plans_[d.intersection];
  const double lost = scenario_->lost_time_s;
  std::vector<Interval> next;

  auto push = [&](std::size_t phase, double a, double b) {
    const bool change = plan.last_phase.has_value() ? *plan.last_phase != phase
                                                    : scenario_->intersections[d.intersection].phases.size() > 1;
    next.push_back({phase, a, b, change ? a + lost : a});
    plan.last_phase = phase;
  };

  if (d.kind == DecisionKind::ActivePhase) {
    push(d.active_phase, start_s, start_s + d.period_s);
    plan.epoch_end_s = start_s + d.period_s;
  } else {
    double t = start_s;
    for (std::size_t p = 0; p < d.splits.size(); ++p) {
      const double dur = d.splits[p] * d.cycle_s;
      push(p, t, t + dur);
      t += dur;
    }
    plan.epoch_end_s = start_s + d.cycle_s;
  }
  plan.intervals = std::move(next);
}

std::optional<std::size_t> SignalState::active_phase(std::size_t intersection, double t) const {
  for (const auto& iv : plans_.at(intersection).intervals)
    if (t + kTimeEps >= iv.start_s && t + kTimeEps < iv.end_s) return iv.phase;
  return std::nullopt;
}

bool SignalState::discharging(net::LinkIndex l, double t) const {
  const auto [intersection, phase] = control_.at(l);
  if (intersection == kNone) return true;
  for (const auto& iv : plans_[intersection].intervals)
    if (iv.phase == phase && t + kTimeEps >= iv.discharge_from_s && t + kTimeEps < iv.end_s)
      return true;
  return false;
}

double SignalState::epoch_end(std::size_t intersection) const { return plans_.at(intersection).epoch_end_s; }

}  // namespace mhp::sim
