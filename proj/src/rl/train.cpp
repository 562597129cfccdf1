#include "mhp/rl/train.hpp"

#include "mhp/parallel.hpp"
#include "util/hash.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>

namespace mhp::rl {

namespace {
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::uint64_t h = util::fnv1a("mhp-train");
  h = util::fnv1a_mix(h, seed);
  h = util::fnv1a_mix(h, a);
  return util::fnv1a_mix(h, b);
}

struct Rollout {
  std::vector<Trajectory> traj;
  std::vector<std::vector<VectorXd>> raw_obs;
  double reward = 0.0;
  double tts_h = 0.0;
};

Rollout rollout(const sim::Scenario& scenario, const std::shared_ptr<const PolicySet>& policy, std::uint64_t seed,
                bool training) {
  RlController c(policy, training, derive_seed(seed, 0xac7, 0));
  const auto m = sim::run_episode(scenario, c, seed);
  return {c.trajectories(), c.raw_observations(), c.episode_reward(), m.total_time_spent_h};
}

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}
}  // namespace

PolicySet clone_policy(const PolicySet& p) {
  PolicySet out = p;
  std::map<const Agent*, std::shared_ptr<Agent>> copies;
  for (auto& a : out.agents) {
    auto& c = copies[a.get()];
    if (!c) c = std::make_shared<Agent>(*a);
    a = c;
  }
  return out;
}

EvalResult evaluate_policy(const sim::Scenario& scenario, const PolicySet& policy,
                           const std::vector<std::uint64_t>& seeds, std::size_t threads, bool keep_logs) {
  auto snap = std::make_shared<const PolicySet>(clone_policy(policy));
  EvalResult r;
  r.tts_h.resize(seeds.size());
  r.reward.resize(seeds.size());
  if (keep_logs) r.logs.resize(seeds.size());
  parallel_for(
      seeds.size(),
      [&](std::size_t k) {
        RlController c(snap, false, 0);
        auto m = sim::run_episode(scenario, c, seeds[k]);
        r.tts_h[k] = m.total_time_spent_h;
        r.reward[k] = c.episode_reward();
        if (keep_logs) r.logs[k] = std::move(m);
      },
      threads);
  return r;
}

TrainResult train(const sim::Scenario& scenario, const TrainConfig& cfg, const ProgressFn& progress) {
  if (cfg.iterations < 0 || cfg.episodes_per_iteration <= 0) throw std::invalid_argument("train: bad budget");
  PolicySet policy = make_policy_set(scenario, cfg.obs, cfg.reward, cfg.shared, cfg.ppo, derive_seed(cfg.seed, 1, 0));
  policy.reward_scale = cfg.reward_scale;
  policy.action_map = cfg.action_map;
  const auto uniq = policy.unique_agents();
  std::map<const Agent*, std::size_t> agent_index;
  for (std::size_t u = 0; u < uniq.size(); ++u) agent_index[uniq[u].get()] = u;
  std::vector<Adam> opt;
  for (const auto& a : uniq) opt.emplace_back(a->net.param_count(), cfg.ppo.lr);
  std::mt19937_64 update_rng(derive_seed(cfg.seed, 2, 0));
  std::vector<double> return_sq(uniq.size(), 0.0), return_n(uniq.size(), 0.0);

  auto absorb_scale = [&](const std::vector<Rollout>& rs) {
    for (const auto& r : rs)
      for (std::size_t i = 0; i < r.raw_obs.size(); ++i)
        for (const auto& o : r.raw_obs[i]) policy.agents[i]->obs_scale.update(o);
  };

  {
    // warm-up episode so the first policy sees scaled inputs
    auto snap = std::make_shared<const PolicySet>(clone_policy(policy));
    absorb_scale({rollout(scenario, snap, derive_seed(cfg.seed, 3, 0), true)});
  }

  TrainResult result;
  result.best_eval_tts_h = std::numeric_limits<double>::infinity();
  int episodes = 0;
  for (int it = 0; it < cfg.iterations; ++it) {
    auto snap = std::make_shared<const PolicySet>(clone_policy(policy));
    std::vector<Rollout> rs(static_cast<std::size_t>(cfg.episodes_per_iteration));
    parallel_for(
        rs.size(),
        [&](std::size_t e) { rs[e] = rollout(scenario, snap, derive_seed(cfg.seed, 4 + it, e), true); },
        cfg.threads);
    episodes += cfg.episodes_per_iteration;

    LearningRow row;
    row.iteration = it;
    row.episodes = episodes;
    std::vector<double> rewards, tts;
    for (const auto& r : rs) {
      rewards.push_back(r.reward);
      tts.push_back(r.tts_h);
    }
    row.mean_reward = mean(rewards);
    row.mean_train_tts_h = mean(tts);

    std::vector<std::vector<Trajectory>> batches(uniq.size());
    for (const auto& r : rs)
      for (std::size_t i = 0; i < r.traj.size(); ++i)
        if (!r.traj[i].empty()) batches[agent_index[policy.agents[i].get()]].push_back(r.traj[i]);
    if (cfg.normalize_returns) {
      for (std::size_t u = 0; u < uniq.size(); ++u) {
        for (const auto& traj : batches[u]) {
          double g = 0.0;
          for (auto t = traj.rbegin(); t != traj.rend(); ++t) {
            g = t->reward + cfg.ppo.gamma * g;
            return_sq[u] += g * g;
            return_n[u] += 1.0;
          }
        }
        const double scale = return_n[u] > 0.0 ? std::sqrt(return_sq[u] / return_n[u]) : 1.0;
        if (scale > 0.0)
          for (auto& traj : batches[u])
            for (auto& t : traj) t.reward /= scale;
      }
    }
    double entropy = 0.0, kl = 0.0, ev = 0.0;
    for (std::size_t u = 0; u < uniq.size(); ++u) {
      if (batches[u].empty()) continue;
      const auto st = ppo_update(batches[u], uniq[u]->net, opt[u], cfg.ppo, update_rng);
      entropy += st.entropy / static_cast<double>(uniq.size());
      kl += st.approx_kl / static_cast<double>(uniq.size());
      ev += st.explained_variance / static_cast<double>(uniq.size());
    }
    row.entropy = entropy;
    row.approx_kl = kl;
    row.explained_variance = ev;
    absorb_scale(rs);

    row.eval_tts_h = std::numeric_limits<double>::quiet_NaN();
    const bool eval_now = cfg.eval_every > 0 && ((it + 1) % cfg.eval_every == 0 || it + 1 == cfg.iterations);
    if (eval_now && !cfg.eval_seeds.empty()) {
      const auto ev = evaluate_policy(scenario, policy, cfg.eval_seeds, cfg.threads);
      row.eval_tts_h = mean(ev.tts_h);
      row.eval_reward = mean(ev.reward);
      if (row.eval_tts_h < result.best_eval_tts_h) {
        result.best_eval_tts_h = row.eval_tts_h;
        result.best_iteration = it;
        result.best = clone_policy(policy);
      }
    }
    result.curve.push_back(row);
    if (progress) progress(row);
  }
  result.last = clone_policy(policy);
  if (result.best_iteration < 0) {
    result.best = clone_policy(policy);
    result.best_eval_tts_h = std::numeric_limits<double>::quiet_NaN();
  }
  return result;
}

void write_learning_curve_csv(std::ostream& os, const std::vector<LearningRow>& curve) {
  os.precision(10);
  os << "iteration,episodes,mean_reward,mean_train_tts_h,eval_tts_h,eval_reward,entropy,approx_kl\n";
  for (const auto& r : curve) {
    os << r.iteration << ',' << r.episodes << ',' << r.mean_reward << ',' << r.mean_train_tts_h << ',';
    if (std::isnan(r.eval_tts_h)) os << ",";
    else os << r.eval_tts_h << ',' << r.eval_reward;
    os << ',' << r.entropy << ',' << r.approx_kl << '\n';
  }
}

}  // namespace mhp::rl
