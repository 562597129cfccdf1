#include "mhp/rl/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace mhp::rl {

namespace {
constexpr double kLog2Pi = 1.8378770664093453;  // log(2 pi)
constexpr double kObsClip = 10.0;
}  // namespace

ActorCritic::ActorCritic(int obs_dim, int act_dim, const std::vector<int>& hidden, int critic_extra)
    : hidden_(hidden) {
  if (critic_extra < 0) throw std::invalid_argument("ActorCritic: negative critic_extra");
  std::vector<int> a{obs_dim}, c{obs_dim + critic_extra};
  for (int h : hidden) {
    a.push_back(h);
    c.push_back(h);
  }
  a.push_back(act_dim);
  c.push_back(1);
  actor_ = Mlp(a);
  critic_ = Mlp(c);
  params_ = VectorXd::Zero(actor_.param_count() + act_dim + critic_.param_count());
}

void ActorCritic::init(std::mt19937_64& rng, double init_log_std) {
  actor_.init(params_, actor_offset(), rng, 0.01);
  params_.segment(log_std_offset(), act_dim()).setConstant(init_log_std);
  critic_.init(params_, critic_offset(), rng, 1.0);
}

VectorXd ActorCritic::mean(const VectorXd& obs) const {
  return actor_.forward(params_, actor_offset(), obs).col(0);
}

double ActorCritic::value(const VectorXd& critic_in) const {
  return critic_.forward(params_, critic_offset(), critic_in)(0, 0);
}

VectorXd ActorCritic::critic_input(const VectorXd& obs, const VectorXd& extra) const {
  if (extra.size() != critic_extra()) throw std::invalid_argument("ActorCritic: critic feature count mismatch");
  VectorXd c(obs.size() + extra.size());
  c << obs, extra;
  return c;
}

double ActorCritic::log_prob(const VectorXd& mean, const VectorXd& action) const {
  const VectorXd ls = log_std();
  const VectorXd z = ((action - mean).array() / ls.array().exp()).matrix();
  return -0.5 * z.squaredNorm() - ls.sum() - 0.5 * static_cast<double>(act_dim()) * kLog2Pi;
}

double ActorCritic::entropy() const {
  return log_std().sum() + 0.5 * static_cast<double>(act_dim()) * (1.0 + kLog2Pi);
}

ActorCritic::Sample ActorCritic::sample(const VectorXd& obs, const VectorXd& critic_in, std::mt19937_64& rng) const {
  std::normal_distribution<double> n01(0.0, 1.0);
  const VectorXd mu = mean(obs);
  VectorXd a(mu.size());
  const VectorXd ls = log_std();
  for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = mu[i] + std::exp(ls[i]) * n01(rng);
  return {a, log_prob(mu, a), value(critic_in)};
}

ActionMap parse_action_map(const std::string& s) {
  if (s == "softmax") return ActionMap::Softmax;
  if (s == "clipped") return ActionMap::Clipped;
  throw std::invalid_argument("unknown action map '" + s + "' (expected softmax|clipped)");
}

std::string to_string(ActionMap m) { return m == ActionMap::Softmax ? "softmax" : "clipped"; }

std::vector<double> action_to_splits(std::span<const double> raw, std::span<const double> floors, ActionMap map) {
  const std::size_t n = raw.size();
  if (n == 0 || floors.size() != n) throw std::invalid_argument("action_to_splits: size mismatch");
  const double floor_sum = std::accumulate(floors.begin(), floors.end(), 0.0);
  if (floor_sum > 1.0 + 1e-12) throw std::invalid_argument("action_to_splits: floors exceed 1");
  double mx = -std::numeric_limits<double>::infinity();
  for (double r : raw) {
    if (std::isnan(r)) throw std::invalid_argument("action_to_splits: NaN action");
    mx = std::max(mx, r);
  }
  std::vector<double> e(n);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (map == ActionMap::Clipped)
      e[i] = (std::clamp(raw[i], -1.0, 1.0) + 1.0) / 2.0;
    else
      e[i] = std::isinf(mx) ? (raw[i] == mx ? 1.0 : 0.0) : std::exp(raw[i] - mx);
    z += e[i];
  }
  if (z == 0.0) {
    std::fill(e.begin(), e.end(), 1.0);
    z = static_cast<double>(n);
  }
  const double free = std::max(0.0, 1.0 - floor_sum);
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = floors[i] + free * e[i] / z;
  // push the rounding residue onto the largest entry so the sum is 1 to the ulp
  const double residue = 1.0 - std::accumulate(s.begin(), s.end(), 0.0);
  auto it = std::max_element(s.begin(), s.end());
  *it += residue;
  return s;
}

LossParts ppo_loss(const ActorCritic& net, const VectorXd& params, const Batch& batch, const PpoConfig& cfg,
                   VectorXd* grad) {
  const auto b = batch.obs.cols();
  if (b == 0) throw std::invalid_argument("ppo_loss: empty batch");
  const double inv_b = 1.0 / static_cast<double>(b);
  const int k = net.act_dim();

  Mlp::Cache actor_cache, critic_cache;
  const bool need = grad != nullptr;
  const MatrixXd mu = net.actor().forward(params, net.actor_offset(), batch.obs, need ? &actor_cache : nullptr);
  const MatrixXd& cin = batch.critic_obs.size() ? batch.critic_obs : batch.obs;
  const MatrixXd v = net.critic().forward(params, net.critic_offset(), cin, need ? &critic_cache : nullptr);
  const VectorXd ls = params.segment(net.log_std_offset(), k);
  const VectorXd inv_var = (-2.0 * ls.array()).exp().matrix();

  LossParts out;
  MatrixXd dmu;
  VectorXd dls;
  if (need) {
    grad->setZero(params.size());
    dmu = MatrixXd::Zero(k, b);
    dls = VectorXd::Zero(k);
  }
  MatrixXd dv(1, b);
  std::size_t clipped = 0;
  for (Eigen::Index j = 0; j < b; ++j) {
    const VectorXd diff = batch.actions.col(j) - mu.col(j);
    const double logp = -0.5 * diff.cwiseProduct(diff).dot(inv_var) - ls.sum() - 0.5 * k * kLog2Pi;
    const double log_ratio = logp - batch.old_log_prob[j];
    const double r = std::exp(log_ratio);
    const double a = batch.advantages[j];
    const double rc = std::clamp(r, 1.0 - cfg.clip, 1.0 + cfg.clip);
    const double unclipped = r * a, clipped_obj = rc * a;
    const bool use_unclipped = unclipped <= clipped_obj;
    out.policy -= std::min(unclipped, clipped_obj) * inv_b;
    if (rc != r) ++clipped;
    out.approx_kl += ((r - 1.0) - log_ratio) * inv_b;

    const double err = v(0, j) - batch.returns[j];
    out.value += err * err * inv_b;
    dv(0, j) = cfg.value_coef * 2.0 * err * inv_b;

    if (need && use_unclipped) {
      // d(-r A / B)/d logp = -r A / B
      const double g = -unclipped * inv_b;
      dmu.col(j) += g * diff.cwiseProduct(inv_var);
      dls += g * (diff.cwiseProduct(diff).cwiseProduct(inv_var) - VectorXd::Ones(k));
    }
  }
  out.entropy = ls.sum() + 0.5 * k * (1.0 + kLog2Pi);
  out.clip_fraction = static_cast<double>(clipped) * inv_b;
  out.total = out.policy + cfg.value_coef * out.value - cfg.entropy_coef * out.entropy;

  if (need) {
    net.actor().backward(params, net.actor_offset(), actor_cache, dmu, *grad);
    grad->segment(net.log_std_offset(), k) += dls - cfg.entropy_coef * VectorXd::Ones(k);
    net.critic().backward(params, net.critic_offset(), critic_cache, dv, *grad);
  }
  return out;
}

void gae(const Trajectory& traj, double gamma, double lambda, std::vector<double>& adv, std::vector<double>& ret) {
  const std::size_t n = traj.size();
  adv.assign(n, 0.0);
  ret.assign(n, 0.0);
  double next_adv = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const auto& t = traj[i];
    double next_value;
    if (i + 1 < n) next_value = t.done ? 0.0 : traj[i + 1].value;
    else next_value = t.done ? 0.0 : t.value;
    if (t.done) next_adv = 0.0;
    const double delta = t.reward + gamma * next_value - t.value;
    next_adv = delta + gamma * lambda * next_adv;
    adv[i] = next_adv;
    ret[i] = adv[i] + t.value;
  }
}

UpdateStats ppo_update(const std::vector<Trajectory>& trajectories, ActorCritic& net, Adam& opt, const PpoConfig& cfg,
                       std::mt19937_64& rng) {
  std::vector<const Transition*> flat;
  std::vector<double> adv, ret;
  for (const auto& traj : trajectories) {
    std::vector<double> a, r;
    gae(traj, cfg.gamma, cfg.lambda, a, r);
    for (std::size_t i = 0; i < traj.size(); ++i) {
      flat.push_back(&traj[i]);
      adv.push_back(a[i]);
      ret.push_back(r[i]);
    }
  }
  if (flat.empty()) throw std::invalid_argument("ppo_update: no transitions");
  for (double a : adv)
    if (!std::isfinite(a)) throw std::invalid_argument("ppo_update: non-finite advantage");

  const std::size_t n = flat.size();
  UpdateStats stats;
  {
    double rm = 0.0;
    for (double r : ret) rm += r / static_cast<double>(n);
    double var_r = 0.0, var_e = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      var_r += (ret[i] - rm) * (ret[i] - rm);
      const double e = ret[i] - flat[i]->value;
      var_e += e * e;
    }
    stats.explained_variance = var_r > 0.0 ? 1.0 - var_e / var_r : 0.0;
  }
  if (cfg.normalize_advantages && n > 1) {
    const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / static_cast<double>(n);
    double var = 0.0;
    for (double a : adv) var += (a - mean) * (a - mean);
    const double sd = std::sqrt(var / static_cast<double>(n));
    for (double& a : adv) a = (a - mean) / (sd + 1e-8);
  }

  const int od = net.obs_dim(), ad = net.act_dim(), cd = od + net.critic_extra();
  const std::size_t mb = cfg.minibatch > 0 ? static_cast<std::size_t>(cfg.minibatch) : n;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::size_t batches = 0, batch_index = 0;
  VectorXd grad(net.param_count());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += mb, ++batch_index) {
      const std::size_t end = std::min(n, start + mb);
      const auto bsz = static_cast<Eigen::Index>(end - start);
      Batch b{MatrixXd(od, bsz), MatrixXd(cd, bsz), MatrixXd(ad, bsz), VectorXd(bsz), VectorXd(bsz), VectorXd(bsz)};
      for (Eigen::Index j = 0; j < bsz; ++j) {
        const std::size_t idx = order[start + static_cast<std::size_t>(j)];
        b.obs.col(j) = flat[idx]->obs;
        b.critic_obs.col(j) = flat[idx]->critic_obs.size() ? flat[idx]->critic_obs : flat[idx]->obs;
        b.actions.col(j) = flat[idx]->action;
        b.old_log_prob[j] = flat[idx]->log_prob;
        b.advantages[j] = adv[idx];
        b.returns[j] = ret[idx];
      }
      const LossParts lp = ppo_loss(net, net.params(), b, cfg, &grad);
      if (!grad.allFinite() || !std::isfinite(lp.total))
        throw NonFiniteGradient("NonFiniteGradient: minibatch " + std::to_string(batch_index) +
                                    " produced a non-finite loss or gradient",
                                batch_index);
      if (cfg.max_grad_norm > 0.0) {
        // actor (+ log std) and critic are clipped separately so a large
        // value error cannot shrink the policy step
        auto clip = [&](Eigen::Index from, Eigen::Index len) {
          auto seg = grad.segment(from, len);
          const double norm = seg.norm();
          if (norm > cfg.max_grad_norm) seg *= cfg.max_grad_norm / norm;
        };
        clip(0, net.critic_offset());
        clip(net.critic_offset(), net.param_count() - net.critic_offset());
      }
      const VectorXd backup = net.params();
      opt.step(net.params(), grad);
      if (!net.params().allFinite()) {
        net.params() = backup;
        throw NonFiniteGradient("NonFiniteGradient: parameters became non-finite after minibatch " +
                                    std::to_string(batch_index),
                                batch_index);
      }
      stats.policy_loss += lp.policy;
      stats.value_loss += lp.value;
      stats.entropy += lp.entropy;
      stats.approx_kl += lp.approx_kl;
      stats.clip_fraction += lp.clip_fraction;
      ++batches;
    }
  }
  if (batches > 0) {
    const double inv = 1.0 / static_cast<double>(batches);
    stats.policy_loss *= inv;
    stats.value_loss *= inv;
    stats.entropy *= inv;
    stats.approx_kl *= inv;
    stats.clip_fraction *= inv;
  }
  stats.samples = n;
  return stats;
}

void RunningScale::update(const VectorXd& x) {
  if (sum_sq_.size() == 0) sum_sq_ = VectorXd::Zero(x.size());
  if (x.size() != sum_sq_.size()) throw std::invalid_argument("RunningScale: dimension mismatch");
  sum_sq_ += x.cwiseProduct(x);
  count_ += 1.0;
}

VectorXd RunningScale::scale() const {
  if (count_ <= 0.0) return VectorXd::Ones(sum_sq_.size());
  return (sum_sq_ / count_).cwiseSqrt().cwiseMax(1.0);
}

VectorXd RunningScale::apply(const VectorXd& x) const {
  if (sum_sq_.size() == 0) return x;
  if (x.size() != sum_sq_.size()) throw std::invalid_argument("RunningScale: dimension mismatch");
  return x.cwiseQuotient(scale()).cwiseMax(-kObsClip).cwiseMin(kObsClip);
}

}  // namespace mhp::rl
