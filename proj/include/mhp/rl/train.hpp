#pragma once

// Concurrent training of the per-intersection agents in shared episodes.

#include "mhp/mesosim.hpp"
#include "mhp/rl/agent.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <vector>

namespace mhp::rl {

struct TrainConfig {
  ObservationConfig obs;
  RewardMode reward = RewardMode::Potential;
  bool shared = false;
  double reward_scale = 1.0;
  ActionMap action_map = ActionMap::Clipped;
  /// Divide rewards by a running RMS of each agent's discounted return
  /// before the update.
  bool normalize_returns = true;
  int iterations = 200;
  int episodes_per_iteration = 16;
  int eval_every = 10;
  std::vector<std::uint64_t> eval_seeds = {1000, 1001, 1002};
  std::uint64_t seed = 0;
  std::size_t threads = 0;  // 0 = MHP_THREADS / hardware
  PpoConfig ppo{.lr = 1e-3};
};

struct LearningRow {
  int iteration = 0;
  int episodes = 0;           // training episodes so far
  double mean_reward = 0.0;   // per-episode reward summed over agents, unscaled
  double mean_train_tts_h = 0.0;
  double eval_tts_h = 0.0;    // NaN when not evaluated this iteration
  double eval_reward = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double explained_variance = 0.0;
};

struct TrainResult {
  PolicySet best;   // best by evaluation TTS
  PolicySet last;
  std::vector<LearningRow> curve;
  int best_iteration = -1;
  double best_eval_tts_h = 0.0;
};

struct EvalResult {
  std::vector<double> tts_h;
  std::vector<double> reward;
  std::vector<sim::MetricsLog> logs;
};

/// Deterministic (mean-action) episodes of a policy, one per seed.
EvalResult evaluate_policy(const sim::Scenario& scenario, const PolicySet& policy,
                           const std::vector<std::uint64_t>& seeds, std::size_t threads = 0,
                           bool keep_logs = false);

/// Deep copy; shared agents stay shared.
PolicySet clone_policy(const PolicySet& p);

using ProgressFn = std::function<void(const LearningRow&)>;

TrainResult train(const sim::Scenario& scenario, const TrainConfig& cfg, const ProgressFn& progress = {});

void write_learning_curve_csv(std::ostream& os, const std::vector<LearningRow>& curve);

}  // namespace mhp::rl
