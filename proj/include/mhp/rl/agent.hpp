#pragma once

// Per-intersection agents: observation and reward construction, the policy
// set, and the controller that drives the simulator with it.

#include "mhp/control.hpp"
#include "mhp/pressure.hpp"
#include "mhp/rl/ppo.hpp"
#include "mhp/scenario.hpp"

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace mhp::rl {

enum class RewardMode {
  Potential,  // -sum of multi-hop upstream potentials of the incoming links
  Pressure,   // -|sum of phase pressures|, single-intersection pressure reward
};

RewardMode parse_reward_mode(const std::string& s);
std::string to_string(RewardMode m);

struct ObservationConfig {
  int hop = 0;
  /// Stack pressures for hops 0..hop instead of only hop.
  bool stacked = false;
};

/// Phase pressures at the intersection, in phase order.
VectorXd make_observation(const pressure::PressureEngine& engine, const sim::Scenario& scenario,
                          std::size_t intersection, const net::QueueSnapshot& q, const ObservationConfig& cfg);

double compute_reward(const pressure::PressureEngine& engine, const sim::Scenario& scenario,
                      std::size_t intersection, const net::QueueSnapshot& q, int hop, RewardMode mode);

struct Agent {
  ActorCritic net;
  RunningScale obs_scale;
};

/// One agent per intersection; with shared parameters every slot points to
/// the same Agent.
struct PolicySet {
  ObservationConfig obs;
  RewardMode reward = RewardMode::Potential;
  bool shared = false;
  double reward_scale = 1.0;
  ActionMap action_map = ActionMap::Clipped;
  std::vector<std::shared_ptr<Agent>> agents;

  /// Distinct agents in first-use order.
  std::vector<std::shared_ptr<Agent>> unique_agents() const;
  int obs_dim(const sim::Scenario& scenario, std::size_t intersection) const;
};

PolicySet make_policy_set(const sim::Scenario& scenario, const ObservationConfig& obs, RewardMode reward,
                          bool shared, const PpoConfig& ppo, std::uint64_t seed);

/// Checkpoint text format, whitespace separated, doubles printed with 17
/// significant digits:
///
///   mhp-policy 1
///   hop <H> stacked <0|1> reward <potential|pressure> shared <0|1> reward_scale <x>
///        action_map <softmax|clipped>
///   agents <N> unique <U>
///   slot <i> <u>                       (N lines; agent index per intersection)
///   agent <u> obs <d> act <k> hidden <m> <h1> .. <hm> critic_extra <e>
///   scale <count> <d sums of squares>
///   params <n> <n values>              (layout: actor | log_std | critic)
void save_policy(std::ostream& os, const PolicySet& policy);
PolicySet load_policy(std::istream& is);
void save_policy_file(const std::string& path, const PolicySet& policy);
PolicySet load_policy_file(const std::string& path);

/// Drives signals from a PolicySet. In training mode actions are sampled and
/// transitions recorded; otherwise the mean action is used.
class RlController final : public sim::Controller {
 public:
  RlController(std::shared_ptr<const PolicySet> policy, bool training, std::uint64_t action_seed);

  std::string name() const override { return "rl"; }
  void reset(const sim::Scenario& scenario, std::uint64_t seed) override;
  sim::ControlDecision decide(const sim::DecisionContext& ctx) override;
  void episode_end(const sim::Scenario& scenario, double time_s, const net::QueueSnapshot& queues) override;

  /// Recorded transitions per intersection (training mode).
  const std::vector<Trajectory>& trajectories() const noexcept { return traj_; }
  /// Raw (unscaled) observations seen this episode, per intersection.
  const std::vector<std::vector<VectorXd>>& raw_observations() const noexcept { return raw_obs_; }
  /// Sum of unscaled rewards over all agents and decision epochs.
  double episode_reward() const noexcept { return episode_reward_; }

 private:
  void settle(std::size_t intersection, const sim::Scenario& scenario, const net::QueueSnapshot& q, bool done);

  std::shared_ptr<const PolicySet> policy_;
  bool training_;
  std::uint64_t action_seed_;
  std::mt19937_64 rng_;
  std::shared_ptr<const pressure::PressureEngine> engine_;
  const net::TransitionMatrix* engine_for_ = nullptr;
  std::vector<Trajectory> traj_;
  std::vector<std::vector<VectorXd>> raw_obs_;
  std::vector<bool> pending_;
  double episode_reward_ = 0.0;
};

}  // namespace mhp::rl
