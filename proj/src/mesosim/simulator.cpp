#include "mhp/mesosim.hpp"

#include "util/hash.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace mhp::sim {

namespace {
constexpr double kTimeEps = 1e-9;

std::uint64_t mix_double(std::uint64_t h, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  return util::fnv1a_mix(h, bits);
}
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t kind, std::uint64_t index) {
  std::uint64_t h = util::fnv1a("mhp-sim-stream");
  h = util::fnv1a_mix(h, seed);
  h = util::fnv1a_mix(h, kind);
  return util::fnv1a_mix(h, index);
}
}  // namespace

std::uint64_t SimState::in_network() const {
  std::uint64_t n = 0;
  for (const auto& l : links) n += l.count();
  return n;
}

std::uint64_t SimState::in_virtual() const {
  std::uint64_t n = 0;
  for (const auto& o : origins) n += o.virtual_queue.size();
  return n;
}

std::uint64_t SimState::hash() const {
  std::uint64_t h = util::fnv1a("simstate");
  h = mix_double(h, clock_s);
  h = util::fnv1a_mix(h, generated);
  h = util::fnv1a_mix(h, exited);
  h = mix_double(h, tts_s);
  h = mix_double(h, queue_s);
  h = mix_double(h, virtual_s);
  for (const auto& l : links) {
    h = util::fnv1a_mix(h, l.moving.size());
    for (auto v : l.moving) h = util::fnv1a_mix(h, v);
    h = util::fnv1a_mix(h, l.queue.size());
    for (auto v : l.queue) h = util::fnv1a_mix(h, v);
    h = mix_double(h, l.budget);
  }
  for (const auto& o : origins) {
    h = util::fnv1a_mix(h, o.virtual_queue.size());
    for (auto v : o.virtual_queue) h = util::fnv1a_mix(h, v);
    std::ostringstream os;
    os << o.rng;
    h = util::fnv1a(os.str(), h);
  }
  for (const auto& r : route_rng) {
    std::ostringstream os;
    os << r;
    h = util::fnv1a(os.str(), h);
  }
  for (const auto& v : ledger) {
    h = mix_double(h, v.created_s);
    h = mix_double(h, v.entered_s);
    h = mix_double(h, v.exited_s);
    h = mix_double(h, v.queued_s);
    h = util::fnv1a_mix(h, v.link);
    h = util::fnv1a_mix(h, v.next);
  }
  return h;
}

Simulator::Simulator(const Scenario& scenario, std::uint64_t seed) : scenario_(&scenario) {
  scenario.validate();
  const auto& g = *scenario.graph;
  state_.links.resize(g.real_link_count());
  for (std::size_t d = 0; d < scenario.demands.size(); ++d) {
    OriginState o{d, scenario.demands[d].origin, {}, {}};
    o.rng.seed(stream_seed(seed, 1, d));
    state_.origins.push_back(std::move(o));
  }
  for (std::size_t l = 0; l < g.real_link_count(); ++l) state_.route_rng.emplace_back(stream_seed(seed, 2, l));
  ff_s_.reserve(g.real_link_count());
  for (const auto& l : g.links()) ff_s_.push_back(l.free_flow_time_s);
}

net::LinkIndex Simulator::draw_next(net::LinkIndex l) {
  const auto edges = scenario_->graph->out_edges(l);
  if (edges.size() == 1) return edges[0].to;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double u = u01(state_.route_rng[l]);
  double cum = 0.0;
  for (const auto& e : edges) {
    cum += e.ratio;
    if (u < cum) return e.to;
  }
  return edges.back().to;
}

void Simulator::enter_link(std::uint32_t vid, net::LinkIndex l, double t) {
  Vehicle& v = state_.ledger[vid];
  if (v.entered_s < 0.0) v.entered_s = t;
  v.link = l;
  v.arrive_s = t + std::max(ff_s_[l], scenario_->dt_s);
  v.next = scenario_->graph->is_exit(l) ? scenario_->graph->supersink() : draw_next(l);
  state_.links[l].moving.push_back(vid);
}

void Simulator::step(const SignalState& signals, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be > 0");
  const auto& g = *scenario_->graph;
  const double t = state_.clock_s;
  auto& links = state_.links;

  // Arrivals at the downstream end; exit links hand vehicles to the supersink.
  for (net::LinkIndex l = 0; l < links.size(); ++l) {
    auto& ls = links[l];
    const bool exit = g.is_exit(l);
    while (!ls.moving.empty() && state_.ledger[ls.moving.front()].arrive_s <= t + kTimeEps) {
      const auto vid = ls.moving.front();
      ls.moving.pop_front();
      if (exit) {
        state_.ledger[vid].exited_s = t;
        ++state_.exited;
      } else {
        ls.queue.push_back(vid);
      }
    }
  }

  // Demand.
  for (auto& o : state_.origins) {
    const double rate = scenario_->demands[o.demand].rate_at(t);
    if (rate <= 0.0) continue;
    std::poisson_distribution<int> arrivals(rate * dt / 3600.0);
    const int n = arrivals(o.rng);
    for (int k = 0; k < n; ++k) {
      Vehicle v;
      v.created_s = t;
      v.origin = o.link;
      v.link = o.link;
      state_.ledger.push_back(v);
      o.virtual_queue.push_back(static_cast<std::uint32_t>(state_.ledger.size() - 1));
      ++state_.generated;
    }
  }

  // Stop-line discharge.
  for (net::LinkIndex l = 0; l < links.size(); ++l) {
    if (g.is_exit(l)) continue;
    auto& ls = links[l];
    if (!signals.discharging(l, t)) continue;
    ls.budget += g.link(l).saturation_flow_vph * dt / 3600.0;
    while (ls.budget >= 1.0 - kTimeEps && !ls.queue.empty()) {
      const auto vid = ls.queue.front();
      const auto next = state_.ledger[vid].next;
      if (links[next].count() >= static_cast<std::size_t>(g.link(next).storage_capacity)) break;
      ls.queue.pop_front();
      enter_link(vid, next, t);
      ls.budget -= 1.0;
    }
    if (ls.budget > 1.0) ls.budget = 1.0;
  }

  // Virtual queues load their origin link while it has space.
  for (auto& o : state_.origins) {
    const auto cap = static_cast<std::size_t>(g.link(o.link).storage_capacity);
    while (!o.virtual_queue.empty() && links[o.link].count() < cap) {
      const auto vid = o.virtual_queue.front();
      o.virtual_queue.pop_front();
      enter_link(vid, o.link, t);
    }
  }

  // Time accounting for [t, t + dt).
  std::uint64_t queued = 0;
  for (const auto& ls : links) {
    if (ls.count() > 0 && ls.count() > static_cast<std::size_t>(g.link(&ls - links.data()).storage_capacity))
      throw SimError("CapacityViolation: link '" + g.name(static_cast<std::size_t>(&ls - links.data())) +
                     "' holds more vehicles than its storage capacity");
    for (auto vid : ls.queue) state_.ledger[vid].queued_s += dt;
    queued += ls.queue.size();
  }
  std::uint64_t waiting = 0;
  for (const auto& o : state_.origins) {
    for (auto vid : o.virtual_queue) {
      state_.ledger[vid].queued_s += dt;
      state_.ledger[vid].virtual_s += dt;
    }
    waiting += o.virtual_queue.size();
  }
  const std::uint64_t present = state_.in_network() + waiting;
  state_.tts_s += static_cast<double>(present) * dt;
  state_.queue_s += static_cast<double>(queued + waiting) * dt;
  state_.virtual_s += static_cast<double>(waiting) * dt;
  state_.clock_s = t + dt;

  check_conservation();
}

void Simulator::check_conservation() const {
  if (state_.generated != state_.in_network() + state_.exited + state_.in_virtual())
    throw SimError("CapacityViolation: vehicle conservation broken (generated " +
                   std::to_string(state_.generated) + ", in network " +
                   std::to_string(state_.in_network()) + ", exited " + std::to_string(state_.exited) +
                   ", virtual " + std::to_string(state_.in_virtual()) + ")");
}

net::QueueSnapshot Simulator::measure_queues() const {
  const auto& g = *scenario_->graph;
  std::vector<double> q(g.size(), 0.0);
  for (std::size_t l = 0; l < state_.links.size(); ++l) q[l] = static_cast<double>(state_.links[l].queue.size());
  if (scenario_->queue_includes_virtual)
    for (const auto& o : state_.origins) q[o.link] += static_cast<double>(o.virtual_queue.size());
  return net::QueueSnapshot::from_counts(g, q);
}

std::vector<std::size_t> Simulator::occupancy() const {
  std::vector<std::size_t> out;
  out.reserve(state_.links.size());
  for (const auto& l : state_.links) out.push_back(l.count());
  return out;
}

double Simulator::ledger_time_spent_s() const {
  double total = 0.0;
  for (const auto& v : state_.ledger) total += (v.exited_s >= 0.0 ? v.exited_s : state_.clock_s) - v.created_s;
  return total;
}

double Simulator::ledger_queue_time_s() const {
  double total = 0.0;
  for (const auto& v : state_.ledger) total += v.queued_s;
  return total;
}

MetricsLog Simulator::metrics() const {
  MetricsLog m;
  m.total_time_spent_h = state_.tts_s / 3600.0;
  m.total_queue_time_h = state_.queue_s / 3600.0;
  m.total_virtual_queue_time_h = state_.virtual_s / 3600.0;
  m.generated = state_.generated;
  m.exited = state_.exited;
  m.remaining = state_.generated - state_.exited;
  m.horizon_s = state_.clock_s;
  return m;
}

MetricsLog run_episode(const Scenario& scenario, Controller& controller, std::uint64_t seed,
                       const EpisodeOptions& options) {
  Simulator sim(scenario, seed);
  SignalState signals(scenario);
  controller.reset(scenario, seed);

  const double dt = scenario.dt_s;
  const auto steps = static_cast<std::int64_t>(std::llround(scenario.horizon_s / dt));
  std::vector<double> next_decision(scenario.intersections.size(), 0.0);
  std::vector<SplitRecord> splits;
  std::vector<double> trace_times;
  std::vector<std::vector<double>> trace;

  for (std::int64_t k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * dt;
    bool decided = false;
    std::optional<net::QueueSnapshot> snapshot;
    for (std::size_t i = 0; i < scenario.intersections.size(); ++i) {
      if (t + kTimeEps < next_decision[i]) continue;
      if (!snapshot) snapshot = sim.measure_queues();
      const DecisionContext ctx{scenario, i, t, *snapshot};
      ControlDecision d = controller.decide(ctx);
      d.intersection = i;
      signals.apply(d, t);
      next_decision[i] = signals.epoch_end(i);
      SplitRecord rec{i, t, next_decision[i] - t, {}};
      if (d.kind == DecisionKind::CycleSplits) {
        rec.splits = d.splits;
      } else {
        rec.splits.assign(scenario.intersections[i].phases.size(), 0.0);
        rec.splits[d.active_phase] = 1.0;
      }
      splits.push_back(std::move(rec));
      decided = true;
    }
    if (decided && options.trace_queues) {
      trace_times.push_back(t);
      const auto& v = snapshot->values();
      trace.emplace_back(v.data(), v.data() + v.size());
    }
    sim.step(signals, dt);
    if (options.on_step) options.on_step(sim);
  }
  controller.episode_end(scenario, sim.state().clock_s, sim.measure_queues());

  MetricsLog m = sim.metrics();
  m.splits = std::move(splits);
  m.trace_times_s = std::move(trace_times);
  m.queue_trace = std::move(trace);
  return m;
}

}  // namespace mhp::sim
