// Acceptance suite: one PASS/FAIL line per criterion, exit 0 only if all pass.
//
//   acceptance [--out DIR] [--only N[,N..]]

#include "support/oracles.hpp"

#include "mhp/controllers.hpp"
#include "mhp/harness.hpp"
#include "mhp/mesosim.hpp"
#include "mhp/parallel.hpp"
#include "mhp/pressure.hpp"
#include "mhp/rl/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>

using namespace mhp;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---- 1..3: pressure ----

Outcome golden_vectors() {
  const auto g = testing::toy_graph();
  const net::TransitionMatrix p(g);
  const auto qv = testing::toy_queues();
  const auto q = net::QueueSnapshot::from_counts(g, qv);
  const std::vector<std::vector<double>> golden = {
      {0, 0, 0, 1, 3.0 / 4, 0, 1, 0, 0},
      {0, 0, 1.0 / 3, 5.0 / 3, 11.0 / 4, 3.0 / 4, 5.0 / 4, 2, 0},
      {0, 0, 1.0 / 3, 5.0 / 3, 37.0 / 12, 9.0 / 4, 7.0 / 4, 35.0 / 12, 11.0 / 4},
      {0, 0, 1.0 / 3, 5.0 / 3, 37.0 / 12, 5.0 / 2, 11.0 / 6, 41.0 / 12, 95.0 / 12},
      {0, 0, 1.0 / 3, 5.0 / 3, 37.0 / 12, 5.0 / 2, 11.0 / 6, 7.0 / 2, 83.0 / 6},
  };
  double worst = 0.0, worst_oracle = 0.0;
  for (int h = 0; h <= 4; ++h) {
    const auto v = pressure::pressure_vector(p, q, h).values;
    const auto oracle = testing::path_pressure(g, qv, h);
    for (std::size_t l = 0; l < g.size(); ++l) {
      worst = std::max(worst, std::abs(v[static_cast<Eigen::Index>(l)] - golden[static_cast<std::size_t>(h)][l]));
      worst_oracle = std::max(worst_oracle, std::abs(v[static_cast<Eigen::Index>(l)] - oracle[l]));
    }
  }
  const double l3 = pressure::link_pressure(p, q, 3, 3);
  const bool ok = worst <= 1e-12 && worst_oracle <= 1e-12 && std::abs(l3 - 5.0 / 3.0) <= 1e-12;
  return {ok, "max |p - golden| = " + fmt("%.2e", worst) + ", max |p - path oracle| = " + fmt("%.2e", worst_oracle) +
                  ", p(3)[link 3] = " + fmt("%.15f", l3)};
}

Outcome recursive_unrolled() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20240611);
  std::uniform_int_distribution<int> size(2, 50), hop(0, 10);
  std::uniform_real_distribution<double> u(0.0, 20.0);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = static_cast<std::size_t>(size(rng));
    const auto p = net::TransitionMatrix::from_dense(testing::random_absorbing(n, rng));
    Eigen::VectorXd q(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i + 1 < q.size(); ++i) q[i] = u(rng);
    q[q.size() - 1] = 0.0;
    const auto snap = net::QueueSnapshot::from_vector(q);
    const int h = hop(rng);
    worst = std::max(worst, (pressure::pressure_vector(p, snap, h).values -
                             pressure::pressure_vector_unrolled(p, snap, h).values)
                                .cwiseAbs()
                                .maxCoeff());
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-9 && secs < 5.0,
          "200 systems, max |recursive - unrolled| = " + fmt("%.2e", worst) + ", " + fmt("%.2f", secs) + " s"};
}

Outcome stabilization() {
  const auto g = testing::toy_graph();
  const net::TransitionMatrix p(g);
  const auto q = net::QueueSnapshot::from_counts(g, testing::toy_queues());
  const auto hist = pressure::pressure_history(p, q, 16);
  const auto real = static_cast<Eigen::Index>(g.real_link_count());
  const auto sink = static_cast<Eigen::Index>(g.supersink());
  double drift = 0.0, inc_err = 0.0;
  for (std::size_t h = 4; h < hist.size(); ++h)
    drift = std::max(drift, (hist[h].values.head(real) - hist[4].values.head(real)).cwiseAbs().maxCoeff());
  const double qsum = q.values().sum();
  for (std::size_t h = 5; h < hist.size(); ++h)
    inc_err = std::max(inc_err, std::abs(hist[h].values[sink] - hist[h - 1].values[sink] - qsum));
  return {drift <= 1e-12 && inc_err <= 1e-12 && qsum == 6.0,
          "real links constant for h = 4..16 (drift " + fmt("%.1e", drift) + "), supersink increment - sum(Q) = " +
              fmt("%.1e", inc_err) + " for h >= 5"};
}

// ---- 4..5: simulator ----

Outcome conservation() {
  std::uint64_t steps = 0, violations = 0, replay_mismatch = 0;
  double slowest = 0.0;
  for (const auto& name : harness::catalog_names()) {
    const auto s = harness::load_scenario(name);
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      for (int kind = 0; kind < 2; ++kind) {
        std::vector<std::uint64_t> hashes[2];
        sim::MetricsLog logs[2];
        for (int rep = 0; rep < 2; ++rep) {
          std::unique_ptr<sim::Controller> c;
          if (kind == 0) c = std::make_unique<ctl::WebsterController>();
          else c = std::make_unique<ctl::MaxPressureController>(1);
          sim::EpisodeOptions opt;
          opt.on_step = [&](const sim::Simulator& sm) {
            const auto& st = sm.state();
            if (st.generated != st.in_network() + st.exited + st.in_virtual()) ++violations;
            if (rep == 0) ++steps;
            if (static_cast<std::uint64_t>(st.clock_s) % 600 == 0) hashes[rep].push_back(st.hash());
          };
          const auto t0 = Clock::now();
          logs[rep] = sim::run_episode(s, *c, seed, opt);
          slowest = std::max(slowest, seconds_since(t0));
        }
        if (!(logs[0] == logs[1]) || hashes[0] != hashes[1]) ++replay_mismatch;
      }
    }
  }
  return {violations == 0 && replay_mismatch == 0 && slowest < 10.0,
          std::to_string(steps) + " steps checked, " + std::to_string(violations) + " conservation violations, " +
              std::to_string(replay_mismatch) + " replay mismatches, slowest 2 h episode " + fmt("%.3f", slowest) +
              " s"};
}

Outcome maxpressure_stability() {
  const auto s = harness::load_scenario("net1x2-under");
  const auto& g = *s.graph;
  std::size_t worst_margin = std::numeric_limits<std::size_t>::max();
  bool ok = true;
  double t_end = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ctl::MaxPressureController c(0);
    sim::EpisodeOptions opt;
    opt.on_step = [&](const sim::Simulator& sm) {
      const auto occ = sm.occupancy();
      for (std::size_t l = 0; l < occ.size(); ++l) {
        const auto cap = static_cast<std::size_t>(g.link(l).storage_capacity);
        if (occ[l] >= cap) ok = false;
        else worst_margin = std::min(worst_margin, cap - occ[l]);
      }
    };
    t_end = sim::run_episode(s, c, seed, opt).horizon_s;
  }
  ok = ok && t_end >= 7200.0;
  return {ok, "5 seeds x " + fmt("%.0f", t_end / 60.0) + " min, smallest free storage " +
                  std::to_string(worst_margin) + " veh"};
}

// ---- 6..8: trained agents ----

struct Trained {
  rl::TrainResult result;
  harness::ResultRow row;
  std::vector<sim::MetricsLog> logs;
  double train_s = 0.0;
};

class Lab {
 public:
  explicit Lab(fs::path out) : out_(std::move(out)) { fs::create_directories(out_); }

  const Trained& get(const std::string& scenario, int hop) {
    const auto key = scenario + "-h" + std::to_string(hop);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    const auto s = harness::load_scenario(scenario);
    rl::TrainConfig cfg;
    cfg.obs.hop = hop;
    cfg.seed = 0;
    Trained t;
    const auto t0 = Clock::now();
    t.result = rl::train(s, cfg);
    t.train_s = seconds_since(t0);
    total_train_s_ += t.train_s;
    harness::ControllerSpec spec;
    spec.kind = "rl";
    spec.hop = hop;
    spec.policy = std::make_shared<const rl::PolicySet>(t.result.last);
    t.row = harness::evaluate(s, spec, harness::default_seeds(20), 0, &t.logs);

    const auto dir = out_ / key;
    fs::create_directories(dir);
    rl::save_policy_file((dir / "policy.txt").string(), t.result.last);
    std::ofstream lc(dir / "learning_curve.csv");
    rl::write_learning_curve_csv(lc, t.result.curve);
    std::ofstream ps(dir / "per_seed.csv");
    harness::write_per_seed_csv(ps, {t.row});
    std::fprintf(stderr, "  trained %s in %.0f s: TTS %.1f h over seeds 0..19\n", key.c_str(), t.train_s,
                 t.row.tts_h.mean);
    return cache_.emplace(key, std::move(t)).first->second;
  }

  /// TTS on seeds 0..9.
  std::vector<double> tts10(const std::string& scenario, int hop) {
    const auto& t = get(scenario, hop);
    std::vector<double> v;
    for (std::size_t k = 0; k < 10; ++k) v.push_back(t.row.episodes[k].tts_h);
    return v;
  }

  double total_train_s() const { return total_train_s_; }
  const fs::path& out() const { return out_; }

 private:
  fs::path out_;
  std::map<std::string, Trained> cache_;
  double total_train_s_ = 0.0;
};

Outcome hop_ordering(Lab& lab) {
  std::ostringstream d;
  bool ok = true;

  const auto h0 = lab.tts10("net1x2-heavy", 0);
  const auto h1 = lab.tts10("net1x2-heavy", 1);
  int wins = 0;
  for (std::size_t k = 0; k < h0.size(); ++k) wins += h1[k] < h0[k] ? 1 : 0;
  ok = ok && wins >= 8;
  d << "net1x2-heavy H1<H0 in " << wins << "/10";

  const double m0 = median(lab.tts10("net1x3-heavy", 0));
  const double m1 = median(lab.tts10("net1x3-heavy", 1));
  const double m2 = median(lab.tts10("net1x3-heavy", 2));
  ok = ok && m2 < m1 && m1 < m0;
  d << "; net1x3-heavy median TTS H0 " << fmt("%.1f", m0) << " H1 " << fmt("%.1f", m1) << " H2 " << fmt("%.1f", m2);

  for (const auto& [name, hmax] : std::vector<std::pair<std::string, int>>{{"net1x2-under", 1}, {"net1x3-under", 2}}) {
    const auto a = lab.tts10(name, 0);
    const auto b = lab.tts10(name, hmax);
    double ma = 0.0, mb = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      ma += a[k] / 10.0;
      mb += b[k] / 10.0;
    }
    const double rel = std::abs(mb - ma) / ma;
    ok = ok && rel <= 0.05;
    d << "; " << name << " |H" << hmax << "-H0|/H0 = " << fmt("%.1f", 100.0 * rel) << "%";
  }
  const double hours = lab.total_train_s() / 3600.0;
  ok = ok && hours <= 2.0;
  d << "; training " << fmt("%.2f", hours) << " h";

  std::ofstream csv(lab.out() / "hop_table.csv");
  csv << "scenario,hop,tts_h_mean,tts_h_median_10,tts_h_std\n";
  for (const auto& [name, hops] : std::vector<std::pair<std::string, std::vector<int>>>{
           {"net1x2-heavy", {0, 1}}, {"net1x3-heavy", {0, 1, 2}}, {"net1x2-under", {0, 1}}, {"net1x3-under", {0, 2}}})
    for (int h : hops) {
      const auto& t = lab.get(name, h);
      csv << name << ',' << h << ',' << t.row.tts_h.mean << ',' << median(lab.tts10(name, h)) << ','
          << t.row.tts_h.std << '\n';
    }
  return {ok, d.str()};
}

Outcome split_behavior(Lab& lab) {
  const auto& t = lab.get("net1x2-heavy", 1);
  const auto s = harness::load_scenario("net1x2-heavy");
  // mean over evaluation seeds 0..9 of the time-weighted split in [0, 30 min)
  std::vector<double> right(2, 0.0), left(2, 0.0);
  for (std::size_t k = 0; k < 10; ++k) {
    const auto r = harness::split_report(t.logs[k], 1, 0.0, 1800.0);
    const auto l = harness::split_report(t.logs[k], 0, 0.0, 1800.0);
    for (int p = 0; p < 2; ++p) {
      right[p] += r.mean_splits[p] / 10.0;
      left[p] += l.mean_splits[p] / 10.0;
    }
  }
  const double ratio = right[0] / right[1];
  const double left_max = 1.0 - s.intersections[0].phases[1].min_green_s / s.cycle_s;
  const bool ok = ratio >= 1.5 && left[0] >= left_max - 0.02;
  std::ofstream csv(lab.out() / "splits_first30.csv");
  csv << "intersection,eb,sb\nI1," << left[0] << ',' << left[1] << "\nI2," << right[0] << ',' << right[1] << '\n';
  return {ok, "right EB:SB = " + fmt("%.2f", ratio) + ":1 (EB " + fmt("%.3f", right[0]) + "), left EB " +
                  fmt("%.3f", left[0]) + " vs max " + fmt("%.3f", left_max)};
}

Outcome reward_correlation(Lab& lab) {
  const auto& t = lab.get("net1x2-heavy", 1);
  std::vector<double> reward, tts;
  for (const auto& e : t.row.episodes) {
    reward.push_back(e.reward);
    tts.push_back(e.tts_h);
  }
  const double r = harness::pearson(reward, tts);
  std::ofstream csv(lab.out() / "reward_vs_tts.csv");
  harness::write_scatter_csv(csv, reward, tts);
  return {r <= -0.9, "Pearson r = " + fmt("%.4f", r) + " over " + std::to_string(reward.size()) + " episodes"};
}

// ---- 9: PPO ----

Outcome ppo_correctness() {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n01(0.0, 1.0);
    rl::PpoConfig cfg;
    cfg.hidden = {5, 4};
    const int obs = 2 + static_cast<int>(seed % 3), act = 2 + static_cast<int>(seed % 2), b = 10;
    rl::ActorCritic net(obs, act, cfg.hidden, 1);
    net.init(rng, -0.5);
    auto rnd = [&](Eigen::Index r, Eigen::Index c) {
      rl::MatrixXd m(r, c);
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n01(rng);
      return m;
    };
    rl::Batch batch;
    batch.obs = rnd(obs, b);
    batch.critic_obs = rl::MatrixXd(obs + 1, b);
    batch.critic_obs << batch.obs, rnd(1, b);
    batch.actions = rnd(act, b);
    batch.advantages = rnd(b, 1);
    batch.returns = rnd(b, 1);
    rl::ActorCritic old = net;
    old.params() += 0.05 * rnd(net.param_count(), 1);
    batch.old_log_prob.resize(b);
    for (Eigen::Index j = 0; j < b; ++j)
      batch.old_log_prob[j] = old.log_prob(old.mean(batch.obs.col(j)), batch.actions.col(j));
    rl::VectorXd grad;
    rl::ppo_loss(net, net.params(), batch, cfg, &grad);
    rl::VectorXd fd(grad.size());
    for (Eigen::Index i = 0; i < grad.size(); ++i) {
      rl::VectorXd p = net.params();
      p[i] += 1e-6;
      const double up = rl::ppo_loss(net, p, batch, cfg, nullptr).total;
      p[i] -= 2e-6;
      fd[i] = (up - rl::ppo_loss(net, p, batch, cfg, nullptr).total) / 2e-6;
    }
    worst = std::max(worst, (grad - fd).norm() / std::max(fd.norm(), 1e-12));
  }
  const double bandit = testing::run_split_bandit(0.75, 500, 1, rl::ActionMap::Clipped);
  return {worst <= 1e-4 && std::abs(bandit - 0.75) <= 0.05,
          "worst relative gradient error " + fmt("%.2e", worst) + " over 20 instances; bandit split " +
              fmt("%.4f", bandit) + " (optimum 0.75)"};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path out = "acceptance_out";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--out" && i + 1 < argc) {
      out = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string tok;
      while (std::getline(ss, tok, ',')) only.insert(std::stoi(tok));
    } else {
      std::fprintf(stderr, "usage: acceptance [--out DIR] [--only N[,N..]]\n");
      return 1;
    }
  }
  Lab lab(out);
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"golden pressure vectors", golden_vectors},
      {"recursive = unrolled", recursive_unrolled},
      {"stabilization", stabilization},
      {"simulator conservation and replay", conservation},
      {"MaxPressure stability (net1x2-under)", maxpressure_stability},
      {"hop ordering", [&] { return hop_ordering(lab); }},
      {"split behavior (net1x2-heavy, H=1)", [&] { return split_behavior(lab); }},
      {"reward-TTS correlation (net1x2-heavy, H=1)", [&] { return reward_correlation(lab); }},
      {"PPO correctness", ppo_correctness},
  };
  int failed = 0;
  std::ofstream summary(out / "summary.txt");
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(n)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    char line[1024];
    std::snprintf(line, sizeof line, "%s criterion %d (%s): %s", o.pass ? "PASS" : "FAIL", n, criteria[i].first,
                  o.detail.c_str());
    std::printf("%s\n", line);
    std::fflush(stdout);
    summary << line << '\n';
  }
  return failed == 0 ? 0 : 2;
}
