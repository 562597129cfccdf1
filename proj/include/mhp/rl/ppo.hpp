#pragma once

// Gaussian actor-critic and the clipped-surrogate PPO update.

#include "mhp/rl/nn.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mhp::rl {

class NonFiniteGradient : public std::runtime_error {
 public:
  NonFiniteGradient(const std::string& what, std::size_t batch) : std::runtime_error(what), batch_(batch) {}
  /// Index of the offending minibatch within the update.
  std::size_t batch() const noexcept { return batch_; }

 private:
  std::size_t batch_;
};

struct PpoConfig {
  double gamma = 0.99;
  double lambda = 0.95;
  double clip = 0.2;
  int epochs = 4;
  int minibatch = 64;
  double lr = 3e-4;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double max_grad_norm = 0.5;  // <= 0 disables clipping
  bool normalize_advantages = true;
  std::vector<int> hidden = {64, 64};
  double init_log_std = -0.5;
  /// Critic also sees the elapsed fraction of the episode horizon.
  bool critic_time_feature = true;
};

/// Actor MLP (obs -> action mean), state-independent log std, critic MLP
/// (obs + optional extra features -> value). Flat parameter layout:
/// [actor | log_std | critic].
class ActorCritic {
 public:
  ActorCritic() = default;
  ActorCritic(int obs_dim, int act_dim, const std::vector<int>& hidden, int critic_extra = 0);

  void init(std::mt19937_64& rng, double init_log_std);

  int obs_dim() const { return actor_.input_dim(); }
  int act_dim() const { return actor_.output_dim(); }
  int critic_extra() const { return critic_.input_dim() - actor_.input_dim(); }
  const std::vector<int>& hidden() const noexcept { return hidden_; }
  Eigen::Index param_count() const noexcept { return params_.size(); }

  VectorXd& params() noexcept { return params_; }
  const VectorXd& params() const noexcept { return params_; }

  Eigen::Index actor_offset() const noexcept { return 0; }
  Eigen::Index log_std_offset() const noexcept { return actor_.param_count(); }
  Eigen::Index critic_offset() const noexcept { return actor_.param_count() + act_dim(); }

  const Mlp& actor() const noexcept { return actor_; }
  const Mlp& critic() const noexcept { return critic_; }
  Eigen::VectorBlock<const VectorXd> log_std() const { return params_.segment(log_std_offset(), act_dim()); }

  VectorXd mean(const VectorXd& obs) const;
  /// critic_in = obs followed by critic_extra() features.
  double value(const VectorXd& critic_in) const;
  VectorXd critic_input(const VectorXd& obs, const VectorXd& extra) const;
  double log_prob(const VectorXd& mean, const VectorXd& action) const;
  double entropy() const;

  struct Sample {
    VectorXd action;
    double log_prob;
    double value;
  };
  Sample sample(const VectorXd& obs, const VectorXd& critic_in, std::mt19937_64& rng) const;

 private:
  std::vector<int> hidden_;
  Mlp actor_, critic_;
  VectorXd params_;
};

/// How a raw Gaussian action becomes cycle splits. Both give floors plus a
/// share of the free mass.
///   Softmax: shares are softmax(raw); bounds are approached, never reached.
///   Clipped: shares are proportional to (clip(raw, -1, 1) + 1) / 2, equal
///            when all are zero, so a phase can sit exactly at its floor.
enum class ActionMap { Softmax, Clipped };

ActionMap parse_action_map(const std::string& s);
std::string to_string(ActionMap m);

/// Deterministic; output sums to 1 and each entry is >= its floor.
std::vector<double> action_to_splits(std::span<const double> raw, std::span<const double> floors,
                                     ActionMap map = ActionMap::Clipped);

/// Minibatch of flattened samples.
struct Batch {
  MatrixXd obs;         // obs_dim x B
  MatrixXd critic_obs;  // (obs_dim + critic_extra) x B
  MatrixXd actions;  // act_dim x B
  VectorXd old_log_prob;
  VectorXd advantages;
  VectorXd returns;
};

struct LossParts {
  double total = 0.0;
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
};

/// PPO loss at `params` (same layout as net.params()). When grad is non-null
/// it receives the analytic gradient.
LossParts ppo_loss(const ActorCritic& net, const VectorXd& params, const Batch& batch, const PpoConfig& cfg,
                   VectorXd* grad);

struct Transition {
  VectorXd obs;
  VectorXd critic_obs;
  VectorXd action;
  double log_prob = 0.0;
  double reward = 0.0;
  double value = 0.0;
  bool done = false;
};

using Trajectory = std::vector<Transition>;

/// Generalized advantage estimates and returns for one trajectory. The last
/// transition bootstraps from zero when done, else from its own value.
void gae(const Trajectory& traj, double gamma, double lambda, std::vector<double>& advantages,
         std::vector<double>& returns);

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double explained_variance = 0.0;  // of the returns by the pre-update values
  std::size_t samples = 0;
};

/// In-place PPO update. Throws std::invalid_argument on empty input or
/// non-finite advantages and NonFiniteGradient when a minibatch gradient or
/// the updated parameters stop being finite (parameters are restored).
UpdateStats ppo_update(const std::vector<Trajectory>& trajectories, ActorCritic& net, Adam& opt, const PpoConfig& cfg,
                       std::mt19937_64& rng);

/// Per-entry running RMS used to scale observations.
class RunningScale {
 public:
  RunningScale() = default;
  explicit RunningScale(int dim) : sum_sq_(VectorXd::Zero(dim)) {}
  void update(const VectorXd& x);
  VectorXd apply(const VectorXd& x) const;
  VectorXd scale() const;
  double count() const noexcept { return count_; }
  void set(const VectorXd& sum_sq, double count) {
    sum_sq_ = sum_sq;
    count_ = count;
  }
  const VectorXd& sum_sq() const noexcept { return sum_sq_; }

 private:
  VectorXd sum_sq_;
  double count_ = 0.0;
};

}  // namespace mhp::rl
