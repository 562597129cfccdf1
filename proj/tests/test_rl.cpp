#include "support/oracles.hpp"

#include "mhp/harness.hpp"
#include "mhp/rl/agent.hpp"
#include "mhp/rl/train.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

using namespace mhp;
using rl::MatrixXd;
using rl::VectorXd;

namespace {

struct Instance {
  rl::ActorCritic net;
  rl::Batch batch;
  rl::PpoConfig cfg;
};

Instance random_instance(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  Instance in;
  in.cfg.hidden = {6, 5};
  in.cfg.entropy_coef = 0.01;
  const int obs = 3, act = 2, extra = 1, b = 12;
  in.net = rl::ActorCritic(obs, act, in.cfg.hidden, extra);
  in.net.init(rng, -0.5);
  auto rnd = [&](Eigen::Index r, Eigen::Index c) {
    MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n01(rng);
    return m;
  };
  in.batch.obs = rnd(obs, b);
  in.batch.critic_obs = MatrixXd(obs + extra, b);
  in.batch.critic_obs << in.batch.obs, rnd(extra, b);
  in.batch.actions = rnd(act, b);
  in.batch.advantages = rnd(b, 1);
  in.batch.returns = rnd(b, 1);
  // old log-probs from nearby parameters so the ratios straddle 1
  VectorXd old = in.net.params() + 0.05 * rnd(in.net.param_count(), 1);
  rl::ActorCritic tmp = in.net;
  tmp.params() = old;
  in.batch.old_log_prob.resize(b);
  for (Eigen::Index j = 0; j < b; ++j)
    in.batch.old_log_prob[j] = tmp.log_prob(tmp.mean(in.batch.obs.col(j)), in.batch.actions.col(j));
  return in;
}

}  // namespace

TEST_CASE("analytic PPO gradient matches central differences") {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    CAPTURE(seed);
    auto in = random_instance(seed);
    VectorXd grad;
    rl::ppo_loss(in.net, in.net.params(), in.batch, in.cfg, &grad);
    VectorXd fd(grad.size());
    const double eps = 1e-6;
    for (Eigen::Index i = 0; i < grad.size(); ++i) {
      VectorXd p = in.net.params();
      p[i] += eps;
      const double up = rl::ppo_loss(in.net, p, in.batch, in.cfg, nullptr).total;
      p[i] -= 2 * eps;
      const double dn = rl::ppo_loss(in.net, p, in.batch, in.cfg, nullptr).total;
      fd[i] = (up - dn) / (2 * eps);
    }
    const double rel = (grad - fd).norm() / std::max(fd.norm(), 1e-12);
    CHECK(rel <= 1e-4);
  }
}

TEST_CASE("zero advantages with no entropy or value term leave the policy unchanged") {
  auto in = random_instance(3);
  in.batch.advantages.setZero();
  in.cfg.entropy_coef = 0.0;
  in.cfg.value_coef = 0.0;
  VectorXd grad;
  rl::ppo_loss(in.net, in.net.params(), in.batch, in.cfg, &grad);
  CHECK(grad.cwiseAbs().maxCoeff() == 0.0);
  rl::Adam opt(in.net.param_count(), 1e-2);
  VectorXd p = in.net.params();
  opt.step(p, grad);
  CHECK((p - in.net.params()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("quadratic bandit converges to its optimum") {
  CHECK(std::abs(testing::run_split_bandit(0.75, 500, 1, rl::ActionMap::Clipped) - 0.75) <= 0.05);
  CHECK(std::abs(testing::run_split_bandit(0.75, 500, 2, rl::ActionMap::Softmax) - 0.75) <= 0.05);
  CHECK(std::abs(testing::run_split_bandit(0.3, 500, 3, rl::ActionMap::Clipped) - 0.3) <= 0.05);
}

TEST_CASE("generalized advantage estimates") {
  rl::Trajectory t;
  for (double r : {1.0, 2.0, 3.0}) t.push_back({VectorXd(), VectorXd(), VectorXd(), 0.0, r, 0.5, false});
  t.back().done = true;
  std::vector<double> adv, ret;
  rl::gae(t, 0.9, 0.8, adv, ret);
  REQUIRE(adv.size() == 3);
  CHECK(adv[2] == doctest::Approx(2.5));
  CHECK(adv[1] == doctest::Approx(3.75));
  CHECK(adv[0] == doctest::Approx(3.65));
  CHECK(ret[0] == doctest::Approx(4.15));

  t.back().done = false;
  rl::gae(t, 0.9, 0.8, adv, ret);
  CHECK(adv[2] == doctest::Approx(2.95));
}

TEST_CASE("action to splits stays on the floored simplex") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> big(0.0, 50.0);
  const double inf = std::numeric_limits<double>::infinity();
  for (auto map : {rl::ActionMap::Clipped, rl::ActionMap::Softmax}) {
    for (int trial = 0; trial < 2000; ++trial) {
      const std::size_t n = 2 + trial % 4;
      std::vector<double> floors(n), raw(n);
      const double cap = u(rng);
      for (auto& f : floors) f = cap * u(rng) / static_cast<double>(n);
      for (auto& r : raw) r = trial % 7 == 0 ? (u(rng) < 0.5 ? inf : -inf) : big(rng);
      if (trial % 5 == 0) raw[0] = 1e300;
      const auto s = rl::action_to_splits(raw, floors, map);
      CHECK(std::abs(std::accumulate(s.begin(), s.end(), 0.0) - 1.0) <= 1e-12);
      for (std::size_t i = 0; i < n; ++i) CHECK(s[i] >= floors[i] - 1e-15);
    }
    const std::vector<double> nan{std::nan(""), 0.0}, fl{0.1, 0.1};
    CHECK_THROWS_AS(rl::action_to_splits(nan, fl, map), std::invalid_argument);
  }
  // clipped map reaches the bound with finite actions
  const std::vector<double> fl{0.1, 0.1};
  CHECK(rl::action_to_splits(std::vector<double>{0.3, -1.5}, fl)[0] == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(rl::action_to_splits(std::vector<double>{0.0, 0.0}, fl)[0] == doctest::Approx(0.5));
  CHECK(rl::action_to_splits(std::vector<double>{-3.0, -3.0}, fl)[0] == doctest::Approx(0.5));
}

TEST_CASE("non-finite rewards are rejected and parameters kept") {
  auto in = random_instance(5);
  rl::Trajectory t;
  VectorXd o = in.batch.obs.col(0), c = in.batch.critic_obs.col(0), a = in.batch.actions.col(0);
  t.push_back({o, c, a, -1.0, std::nan(""), 0.0, true});
  const VectorXd before = in.net.params();
  rl::Adam opt(in.net.param_count(), 1e-3);
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(rl::ppo_update({t}, in.net, opt, in.cfg, rng), std::invalid_argument);
  CHECK((in.net.params() - before).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(rl::ppo_update({}, in.net, opt, in.cfg, rng), std::invalid_argument);
}

TEST_CASE("running scale") {
  rl::RunningScale s(2);
  VectorXd x(2);
  x << 3.0, 0.0;
  s.update(x);
  x << 4.0, 0.0;
  s.update(x);
  const VectorXd y = s.apply(x);
  CHECK(y[0] == doctest::Approx(4.0 / std::sqrt(12.5)));
  CHECK(y[1] == 0.0);
}

TEST_CASE("checkpoint round trip") {
  const auto s = harness::load_scenario("net1x2-heavy");
  rl::PpoConfig ppo;
  auto policy = rl::make_policy_set(s, {1, true}, rl::RewardMode::Potential, false, ppo, 9);
  policy.action_map = rl::ActionMap::Softmax;
  VectorXd v = VectorXd::Constant(policy.agents[0]->net.obs_dim(), 2.0);
  policy.agents[0]->obs_scale.update(v);

  std::ostringstream a;
  rl::save_policy(a, policy);
  std::istringstream in(a.str());
  const auto loaded = rl::load_policy(in);
  std::ostringstream b;
  rl::save_policy(b, loaded);
  CHECK(a.str() == b.str());
  CHECK(loaded.obs.hop == 1);
  CHECK(loaded.obs.stacked);
  CHECK(loaded.action_map == rl::ActionMap::Softmax);
  CHECK((loaded.agents[1]->net.params() - policy.agents[1]->net.params()).cwiseAbs().maxCoeff() == 0.0);

  std::istringstream junk("mhp-policy 2\n");
  CHECK_THROWS(rl::load_policy(junk));
  std::istringstream truncated(a.str().substr(0, a.str().size() / 2));
  CHECK_THROWS(rl::load_policy(truncated));
}

TEST_CASE("shared parameters use one agent") {
  const auto s = harness::load_scenario("net1x3-heavy");
  auto policy = rl::make_policy_set(s, {2, false}, rl::RewardMode::Potential, true, {}, 1);
  CHECK(policy.agents.size() == 3);
  CHECK(policy.unique_agents().size() == 1);
  std::ostringstream os;
  rl::save_policy(os, policy);
  std::istringstream is(os.str());
  CHECK(rl::load_policy(is).unique_agents().size() == 1);
}

TEST_CASE("controller records one transition per decision") {
  const auto s = harness::load_scenario("net1x2-under");
  auto policy = std::make_shared<const rl::PolicySet>(
      rl::make_policy_set(s, {1, false}, rl::RewardMode::Potential, false, {}, 4));
  rl::RlController c(policy, true, 17);
  sim::run_episode(s, c, 0);
  REQUIRE(c.trajectories().size() == 2);
  for (const auto& t : c.trajectories()) {
    CHECK(t.size() == 80);
    CHECK(t.back().done);
    for (const auto& tr : t) CHECK(std::isfinite(tr.reward));
    CHECK(t.front().critic_obs.size() == t.front().obs.size() + 1);
  }
  rl::RlController e1(policy, false, 0), e2(policy, false, 99);
  CHECK(sim::run_episode(s, e1, 3) == sim::run_episode(s, e2, 3));
  CHECK(e1.episode_reward() == e2.episode_reward());
  CHECK(e1.episode_reward() <= 0.0);
}

TEST_CASE("rewards") {
  const auto s = harness::load_scenario("net1x2-heavy");
  const auto& g = *s.graph;
  pressure::PressureEngine engine(s.transition, 2);
  std::vector<double> q(g.real_link_count(), 0.0);
  q[g.index_of("EB1")] = 7.0;
  q[g.index_of("EB2")] = 3.0;
  q[g.index_of("SB2_in")] = 2.0;
  const auto snap = net::QueueSnapshot::from_counts(g, q);
  // I2 incoming links EB2, SB2_in; EB1 is one hop upstream of EB2
  CHECK(rl::compute_reward(engine, s, 1, snap, 0, rl::RewardMode::Potential) == doctest::Approx(-5.0));
  CHECK(rl::compute_reward(engine, s, 1, snap, 1, rl::RewardMode::Potential) == doctest::Approx(-12.0));
  // phase pressures at I2: EB = 3, SB = 2 (downstream exits hold nothing)
  CHECK(rl::compute_reward(engine, s, 1, snap, 0, rl::RewardMode::Pressure) == doctest::Approx(-5.0));
}

TEST_CASE("training is reproducible and thread-count independent") {
  const auto s = harness::load_scenario("net1x2-under");
  rl::TrainConfig cfg;
  cfg.obs.hop = 1;
  cfg.iterations = 2;
  cfg.episodes_per_iteration = 3;
  cfg.eval_seeds = {1000};
  cfg.threads = 1;
  const auto a = rl::train(s, cfg);
  cfg.threads = 3;
  const auto b = rl::train(s, cfg);
  REQUIRE(a.curve.size() == b.curve.size());
  for (std::size_t i = 0; i < a.curve.size(); ++i) CHECK(a.curve[i].mean_reward == b.curve[i].mean_reward);
  std::ostringstream pa, pb;
  rl::save_policy(pa, a.last);
  rl::save_policy(pb, b.last);
  CHECK(pa.str() == pb.str());
  std::ostringstream csv;
  rl::write_learning_curve_csv(csv, a.curve);
  CHECK(csv.str().find("iteration") == 0);
}
