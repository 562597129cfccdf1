#include "mhp/controllers.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mhp::ctl {

std::vector<double> FixedPlan::splits() const {
  std::vector<double> s;
  s.reserve(green_s.size());
  for (double g : green_s) s.push_back((g + lost_per_phase_s) / cycle_s);
  // absorb rounding so the splits sum to 1 exactly enough for validation
  const double sum = std::accumulate(s.begin(), s.end(), 0.0);
  for (double& v : s) v /= sum;
  return s;
}

FixedPlan webster_plan_ratios(std::span<const double> y, double lost_time_s, double min_green_s) {
  if (y.empty()) throw std::invalid_argument("webster_plan: no phases");
  for (double v : y)
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("webster_plan: flow ratios must be finite and >= 0");
  const auto n = static_cast<double>(y.size());
  double Y = std::accumulate(y.begin(), y.end(), 0.0);
  FixedPlan plan;
  if (Y >= kWebsterMaxY) {
    plan.oversaturated = true;
  }
  const double Yc = std::min(Y, kWebsterMaxY);
  double c = (1.5 * lost_time_s + 5.0) / (1.0 - Yc);
  c = std::clamp(c, kWebsterMinCycle, kWebsterMaxCycle);
  // room for every phase's minimum green
  c = std::max(c, lost_time_s + n * min_green_s);
  plan.cycle_s = c;
  plan.lost_per_phase_s = lost_time_s / n;

  const double effective = c - lost_time_s;
  std::vector<double> weights(y.begin(), y.end());
  std::vector<double> floors(y.size(), min_green_s / effective);
  const auto frac = floor_splits(weights, floors);
  plan.green_s.reserve(y.size());
  for (double f : frac) plan.green_s.push_back(f * effective);
  return plan;
}

FixedPlan webster_plan(std::span<const double> flows, double sat_flow_vph, double lost_time_s,
                       double min_green_s) {
  if (!(sat_flow_vph > 0.0)) throw std::invalid_argument("webster_plan: saturation flow must be > 0");
  std::vector<double> y;
  y.reserve(flows.size());
  for (double f : flows) y.push_back(f / sat_flow_vph);
  return webster_plan_ratios(y, lost_time_s, min_green_s);
}

std::vector<double> floor_splits(std::span<const double> weights, std::span<const double> floors) {
  const std::size_t n = weights.size();
  if (n == 0 || floors.size() != n) throw std::invalid_argument("floor_splits: size mismatch");
  const double floor_sum = std::accumulate(floors.begin(), floors.end(), 0.0);
  if (floor_sum > 1.0 + 1e-12) throw std::invalid_argument("floor_splits: floors exceed 1");

  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = std::isfinite(weights[i]) ? std::max(weights[i], 0.0) : 0.0;
  if (std::accumulate(w.begin(), w.end(), 0.0) <= 0.0) std::fill(w.begin(), w.end(), 1.0);

  std::vector<double> s(n, 0.0);
  std::vector<bool> fixed(n, false);
  for (std::size_t round = 0; round <= n; ++round) {
    double free_mass = 1.0;
    double free_weight = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (fixed[i]) free_mass -= floors[i];
      else free_weight += w[i];
    }
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (fixed[i]) continue;
      s[i] = free_weight > 0.0 ? free_mass * w[i] / free_weight : 0.0;
    }
    if (free_weight <= 0.0) {
      // remaining phases have zero weight: share the free mass above their floors
      std::size_t k = 0;
      for (std::size_t i = 0; i < n; ++i) k += fixed[i] ? 0 : 1;
      for (std::size_t i = 0; i < n; ++i)
        if (!fixed[i]) s[i] = free_mass / static_cast<double>(k);
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!fixed[i] && s[i] < floors[i]) {
        fixed[i] = true;
        changed = true;
      }
    }
    if (!changed) break;
  }
  for (std::size_t i = 0; i < n; ++i)
    if (fixed[i]) s[i] = floors[i];
  return s;
}

std::vector<double> split_floors(const Scenario& scenario, std::size_t intersection, double cycle_s) {
  std::vector<double> f;
  for (const auto& ph : scenario.intersections.at(intersection).phases) f.push_back(ph.min_green_s / cycle_s);
  return f;
}

std::vector<double> historical_link_flows(const Scenario& scenario) {
  const auto& g = *scenario.graph;
  const std::size_t n = g.real_link_count();
  double until = 0.0;
  for (const auto& d : scenario.demands)
    for (const auto& iv : d.intervals)
      if (iv.rate_vph > 0.0) until = std::max(until, iv.end_s);

  Eigen::VectorXd d = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  if (until > 0.0)
    for (const auto& dem : scenario.demands) d[static_cast<Eigen::Index>(dem.origin)] += dem.mean_rate(until);

  // f = d + T^T f over the real links
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (const auto& e : g.out_edges(i))
      if (!g.is_supersink(e.to)) a(static_cast<Eigen::Index>(e.to), static_cast<Eigen::Index>(i)) -= e.ratio;
  const Eigen::VectorXd f = a.partialPivLu().solve(d);
  std::vector<double> out(g.size(), 0.0);
  for (std::size_t i = 0; i < n; ++i) out[i] = std::max(0.0, f[static_cast<Eigen::Index>(i)]);
  return out;
}

void WebsterController::reset(const Scenario& scenario, std::uint64_t) {
  const auto flows = historical_link_flows(scenario);
  plans_.clear();
  for (const auto& x : scenario.intersections) {
    std::vector<double> y;
    double min_green = 0.0;
    for (const auto& ph : x.phases) {
      double yi = 0.0;
      for (auto l : ph.incoming_links)
        yi = std::max(yi, flows[l] / scenario.graph->link(l).saturation_flow_vph);
      y.push_back(yi);
      min_green = std::max(min_green, ph.min_green_s);
    }
    const double lost = scenario.lost_time_s * static_cast<double>(x.phases.size());
    // the plan's interval durations must respect every phase's min green
    plans_.push_back(webster_plan_ratios(y, lost, std::max(0.0, min_green - scenario.lost_time_s)));
  }
}

ControlDecision WebsterController::decide(const DecisionContext& ctx) {
  if (ctx.intersection >= plans_.size()) throw std::logic_error("WebsterController: reset() not called");
  const auto& plan = plans_[ctx.intersection];
  ControlDecision d;
  d.intersection = ctx.intersection;
  d.kind = sim::DecisionKind::CycleSplits;
  d.cycle_s = plan.cycle_s;
  d.splits = plan.splits();
  return d;
}

std::vector<double> phase_pressures(const pressure::PressureEngine& engine, const Scenario& scenario,
                                    std::size_t intersection, const net::QueueSnapshot& q, int h) {
  std::vector<double> out;
  for (const auto& ph : scenario.intersections.at(intersection).phases) out.push_back(engine.phase_pressure(q, ph, h));
  return out;
}

std::size_t MaxPressureController::choose(std::span<const double> p) {
  if (p.empty()) throw std::invalid_argument("MaxPressureController: no phases");
  std::size_t best = 0;
  for (std::size_t i = 1; i < p.size(); ++i)
    if (p[i] > p[best]) best = i;
  return best;
}

void MaxPressureController::reset(const Scenario& scenario, std::uint64_t) {
  if (hop_ < 0) throw std::invalid_argument("MaxPressureController: hop must be >= 0");
  if (engine_for_ != scenario.transition.get()) {
    engine_ = std::make_shared<pressure::PressureEngine>(scenario.transition, hop_);
    engine_for_ = scenario.transition.get();
  }
}

ControlDecision MaxPressureController::decide(const DecisionContext& ctx) {
  if (!engine_) throw std::logic_error("MaxPressureController: reset() not called");
  const auto p = phase_pressures(*engine_, ctx.scenario, ctx.intersection, ctx.queues, hop_);
  ControlDecision d;
  d.intersection = ctx.intersection;
  d.kind = sim::DecisionKind::ActivePhase;
  d.active_phase = choose(p);
  d.period_s = ctx.scenario.maxpressure_period_s;
  return d;
}

void GreedySplitController::reset(const Scenario& scenario, std::uint64_t) {
  if (hop_ < 0) throw std::invalid_argument("GreedySplitController: hop must be >= 0");
  if (engine_for_ != scenario.transition.get()) {
    engine_ = std::make_shared<pressure::PressureEngine>(scenario.transition, hop_);
    engine_for_ = scenario.transition.get();
  }
}

ControlDecision GreedySplitController::decide(const DecisionContext& ctx) {
  if (!engine_) throw std::logic_error("GreedySplitController: reset() not called");
  const auto p = phase_pressures(*engine_, ctx.scenario, ctx.intersection, ctx.queues, hop_);
  ControlDecision d;
  d.intersection = ctx.intersection;
  d.kind = sim::DecisionKind::CycleSplits;
  d.cycle_s = ctx.scenario.cycle_s;
  d.splits = floor_splits(p, split_floors(ctx.scenario, ctx.intersection, d.cycle_s));
  return d;
}

ControlDecision FixedSplitController::decide(const DecisionContext& ctx) {
  const auto n = ctx.scenario.intersections.at(ctx.intersection).phases.size();
  ControlDecision d;
  d.intersection = ctx.intersection;
  d.kind = sim::DecisionKind::CycleSplits;
  d.cycle_s = ctx.scenario.cycle_s;
  const auto floors = split_floors(ctx.scenario, ctx.intersection, d.cycle_s);
  if (splits_.empty()) {
    d.splits = floor_splits(std::vector<double>(n, 1.0), floors);
  } else {
    if (splits_.size() != n) throw std::invalid_argument("FixedSplitController: split count mismatch");
    d.splits = floor_splits(splits_, floors);
  }
  return d;
}

}  // namespace mhp::ctl
