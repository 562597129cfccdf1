#include "mhp/rl/agent.hpp"

#include "mhp/controllers.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace mhp::rl {

RewardMode parse_reward_mode(const std::string& s) {
  if (s == "potential") return RewardMode::Potential;
  if (s == "pressure") return RewardMode::Pressure;
  throw std::invalid_argument("unknown reward mode '" + s + "' (expected potential or pressure)");
}

std::string to_string(RewardMode m) { return m == RewardMode::Potential ? "potential" : "pressure"; }

VectorXd make_observation(const pressure::PressureEngine& engine, const sim::Scenario& scenario,
                          std::size_t intersection, const net::QueueSnapshot& q, const ObservationConfig& cfg) {
  const auto& phases = scenario.intersections.at(intersection).phases;
  const auto n = static_cast<Eigen::Index>(phases.size());
  if (!cfg.stacked) {
    VectorXd o(n);
    for (Eigen::Index p = 0; p < n; ++p) o[p] = engine.phase_pressure(q, phases[p], cfg.hop);
    return o;
  }
  VectorXd o(n * (cfg.hop + 1));
  for (int h = 0; h <= cfg.hop; ++h)
    for (Eigen::Index p = 0; p < n; ++p) o[h * n + p] = engine.phase_pressure(q, phases[p], h);
  return o;
}

double compute_reward(const pressure::PressureEngine& engine, const sim::Scenario& scenario,
                      std::size_t intersection, const net::QueueSnapshot& q, int hop, RewardMode mode) {
  if (hop < 0) throw std::invalid_argument("compute_reward: hop must be >= 0");
  const auto& x = scenario.intersections.at(intersection);
  if (mode == RewardMode::Potential) {
    const auto links = x.incoming_links();
    return -engine.potential_sum(q, links, hop);
  }
  double total = 0.0;
  for (const auto& ph : x.phases) total += engine.phase_pressure(q, ph, hop);
  return -std::abs(total);
}

std::vector<std::shared_ptr<Agent>> PolicySet::unique_agents() const {
  std::vector<std::shared_ptr<Agent>> out;
  for (const auto& a : agents)
    if (std::find(out.begin(), out.end(), a) == out.end()) out.push_back(a);
  return out;
}

int PolicySet::obs_dim(const sim::Scenario& scenario, std::size_t intersection) const {
  const int n = static_cast<int>(scenario.intersections.at(intersection).phases.size());
  return obs.stacked ? n * (obs.hop + 1) : n;
}

PolicySet make_policy_set(const sim::Scenario& scenario, const ObservationConfig& obs, RewardMode reward,
                          bool shared, const PpoConfig& ppo, std::uint64_t seed) {
  if (obs.hop < 0) throw std::invalid_argument("hop must be >= 0");
  PolicySet ps;
  ps.obs = obs;
  ps.reward = reward;
  ps.shared = shared;
  std::mt19937_64 rng(seed);
  std::map<std::pair<int, int>, std::shared_ptr<Agent>> by_shape;
  for (std::size_t i = 0; i < scenario.intersections.size(); ++i) {
    const int od = ps.obs_dim(scenario, i);
    const int ad = static_cast<int>(scenario.intersections[i].phases.size());
    if (shared) {
      auto& slot = by_shape[{od, ad}];
      if (slot) {
        ps.agents.push_back(slot);
        continue;
      }
    }
    auto a = std::make_shared<Agent>();
    a->net = ActorCritic(od, ad, ppo.hidden, ppo.critic_time_feature ? 1 : 0);
    a->net.init(rng, ppo.init_log_std);
    a->obs_scale = RunningScale(od);
    if (shared) by_shape[{od, ad}] = a;
    ps.agents.push_back(a);
  }
  return ps;
}

void save_policy(std::ostream& os, const PolicySet& policy) {
  const auto uniq = policy.unique_agents();
  os.precision(17);
  os << "mhp-policy 1\n";
  os << "hop " << policy.obs.hop << " stacked " << (policy.obs.stacked ? 1 : 0) << " reward "
     << to_string(policy.reward) << " shared " << (policy.shared ? 1 : 0) << " reward_scale " << policy.reward_scale
     << " action_map " << to_string(policy.action_map) << "\n";
  os << "agents " << policy.agents.size() << " unique " << uniq.size() << "\n";
  for (std::size_t i = 0; i < policy.agents.size(); ++i) {
    const auto u = std::find(uniq.begin(), uniq.end(), policy.agents[i]) - uniq.begin();
    os << "slot " << i << " " << u << "\n";
  }
  for (std::size_t u = 0; u < uniq.size(); ++u) {
    const auto& a = *uniq[u];
    os << "agent " << u << " obs " << a.net.obs_dim() << " act " << a.net.act_dim() << " hidden "
       << a.net.hidden().size();
    for (int h : a.net.hidden()) os << " " << h;
    os << " critic_extra " << a.net.critic_extra();
    os << "\nscale " << a.obs_scale.count();
    const VectorXd ss = a.obs_scale.sum_sq().size() ? a.obs_scale.sum_sq() : VectorXd::Zero(a.net.obs_dim());
    for (Eigen::Index i = 0; i < ss.size(); ++i) os << " " << ss[i];
    os << "\nparams " << a.net.param_count();
    for (Eigen::Index i = 0; i < a.net.param_count(); ++i) os << " " << a.net.params()[i];
    os << "\n";
  }
}

namespace {
void expect(std::istream& is, const std::string& word) {
  std::string w;
  if (!(is >> w) || w != word) throw std::runtime_error("policy checkpoint: expected '" + word + "', got '" + w + "'");
}
template <class T>
T read(std::istream& is, const char* what) {
  T v;
  if (!(is >> v)) throw std::runtime_error(std::string("policy checkpoint: bad ") + what);
  return v;
}
}  // namespace

PolicySet load_policy(std::istream& is) {
  expect(is, "mhp-policy");
  if (read<int>(is, "version") != 1) throw std::runtime_error("policy checkpoint: unsupported version");
  PolicySet ps;
  expect(is, "hop");
  ps.obs.hop = read<int>(is, "hop");
  expect(is, "stacked");
  ps.obs.stacked = read<int>(is, "stacked") != 0;
  expect(is, "reward");
  ps.reward = parse_reward_mode(read<std::string>(is, "reward"));
  expect(is, "shared");
  ps.shared = read<int>(is, "shared") != 0;
  expect(is, "reward_scale");
  ps.reward_scale = read<double>(is, "reward_scale");
  expect(is, "action_map");
  ps.action_map = parse_action_map(read<std::string>(is, "action_map"));
  expect(is, "agents");
  const auto n = read<std::size_t>(is, "agents");
  expect(is, "unique");
  const auto nu = read<std::size_t>(is, "unique");
  std::vector<std::size_t> slots(n);
  for (std::size_t i = 0; i < n; ++i) {
    expect(is, "slot");
    if (read<std::size_t>(is, "slot") != i) throw std::runtime_error("policy checkpoint: slots out of order");
    slots[i] = read<std::size_t>(is, "slot agent");
    if (slots[i] >= nu) throw std::runtime_error("policy checkpoint: slot agent out of range");
  }
  std::vector<std::shared_ptr<Agent>> uniq;
  for (std::size_t u = 0; u < nu; ++u) {
    expect(is, "agent");
    if (read<std::size_t>(is, "agent") != u) throw std::runtime_error("policy checkpoint: agents out of order");
    expect(is, "obs");
    const int od = read<int>(is, "obs");
    expect(is, "act");
    const int ad = read<int>(is, "act");
    expect(is, "hidden");
    std::vector<int> hidden(read<std::size_t>(is, "hidden count"));
    for (int& h : hidden) h = read<int>(is, "hidden");
    expect(is, "critic_extra");
    const int extra = read<int>(is, "critic_extra");
    auto a = std::make_shared<Agent>();
    a->net = ActorCritic(od, ad, hidden, extra);
    expect(is, "scale");
    const double count = read<double>(is, "scale count");
    VectorXd ss(od);
    for (int i = 0; i < od; ++i) ss[i] = read<double>(is, "scale");
    a->obs_scale = RunningScale(od);
    a->obs_scale.set(ss, count);
    expect(is, "params");
    const auto np = read<Eigen::Index>(is, "param count");
    if (np != a->net.param_count()) throw std::runtime_error("policy checkpoint: parameter count mismatch");
    for (Eigen::Index i = 0; i < np; ++i) a->net.params()[i] = read<double>(is, "param");
    if (!a->net.params().allFinite()) throw std::runtime_error("policy checkpoint: non-finite parameters");
    uniq.push_back(std::move(a));
  }
  for (auto s : slots) ps.agents.push_back(uniq[s]);
  return ps;
}

void save_policy_file(const std::string& path, const PolicySet& policy) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  save_policy(os, policy);
}

PolicySet load_policy_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  return load_policy(is);
}

RlController::RlController(std::shared_ptr<const PolicySet> policy, bool training, std::uint64_t action_seed)
    : policy_(std::move(policy)), training_(training), action_seed_(action_seed), rng_(action_seed) {
  if (!policy_) throw std::invalid_argument("RlController: null policy");
}

void RlController::reset(const sim::Scenario& scenario, std::uint64_t) {
  if (policy_->agents.size() != scenario.intersections.size())
    throw std::invalid_argument("RlController: policy has " + std::to_string(policy_->agents.size()) +
                                " agents, scenario has " + std::to_string(scenario.intersections.size()) +
                                " intersections");
  for (std::size_t i = 0; i < scenario.intersections.size(); ++i) {
    const auto& a = *policy_->agents[i];
    if (a.net.obs_dim() != policy_->obs_dim(scenario, i) ||
        a.net.act_dim() != static_cast<int>(scenario.intersections[i].phases.size()))
      throw std::invalid_argument("RlController: agent " + std::to_string(i) + " does not fit intersection '" +
                                  scenario.intersections[i].id + "'");
  }
  if (engine_for_ != scenario.transition.get()) {
    engine_ = std::make_shared<pressure::PressureEngine>(scenario.transition, policy_->obs.hop);
    engine_for_ = scenario.transition.get();
  }
  rng_.seed(action_seed_);
  traj_.assign(scenario.intersections.size(), {});
  raw_obs_.assign(scenario.intersections.size(), {});
  pending_.assign(scenario.intersections.size(), false);
  episode_reward_ = 0.0;
}

void RlController::settle(std::size_t i, const sim::Scenario& scenario, const net::QueueSnapshot& q, bool done) {
  if (!pending_[i]) return;
  const double r = compute_reward(*engine_, scenario, i, q, policy_->obs.hop, policy_->reward);
  episode_reward_ += r;
  if (training_) {
    auto& t = traj_[i].back();
    t.reward = r * policy_->reward_scale;
    t.done = done;
  }
  pending_[i] = false;
}

sim::ControlDecision RlController::decide(const sim::DecisionContext& ctx) {
  if (!engine_) throw std::logic_error("RlController: reset() not called");
  const std::size_t i = ctx.intersection;
  settle(i, ctx.scenario, ctx.queues, false);

  const auto& agent = *policy_->agents[i];
  const VectorXd raw = make_observation(*engine_, ctx.scenario, i, ctx.queues, policy_->obs);
  raw_obs_[i].push_back(raw);
  const VectorXd obs = agent.obs_scale.apply(raw);

  VectorXd action;
  if (training_) {
    VectorXd extra(agent.net.critic_extra());
    if (extra.size() > 0) extra[0] = ctx.time_s / ctx.scenario.horizon_s;
    const VectorXd cin = agent.net.critic_input(obs, extra);
    const auto s = agent.net.sample(obs, cin, rng_);
    action = s.action;
    traj_[i].push_back({obs, cin, s.action, s.log_prob, 0.0, s.value, false});
  } else {
    action = agent.net.mean(obs);
  }
  pending_[i] = true;

  sim::ControlDecision d;
  d.intersection = i;
  d.kind = sim::DecisionKind::CycleSplits;
  d.cycle_s = ctx.scenario.cycle_s;
  const auto floors = ctl::split_floors(ctx.scenario, i, d.cycle_s);
  d.splits = action_to_splits(std::span<const double>(action.data(), static_cast<std::size_t>(action.size())), floors,
                              policy_->action_map);
  return d;
}

void RlController::episode_end(const sim::Scenario& scenario, double, const net::QueueSnapshot& queues) {
  for (std::size_t i = 0; i < pending_.size(); ++i) settle(i, scenario, queues, true);
}

}  // namespace mhp::rl
