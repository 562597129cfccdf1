// mhp: command-line front end.
//
// Exit codes: 0 success, 1 validation or input error, 2 acceptance
// assertion failed.

#include "mhp/controllers.hpp"
#include "mhp/harness.hpp"
#include "mhp/network.hpp"
#include "mhp/network_io.hpp"
#include "mhp/pressure.hpp"
#include "mhp/rl/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mhp;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitAssert = 2;

struct AssertionFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string g_command;

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  return os;
}

fs::path manifest_path_for(const fs::path& out) { return fs::path(out.string() + ".manifest.json"); }

// ---- net ----

struct NetOpts {
  std::string net;
  std::string out;
};

int net_validate(const NetOpts& o) {
  const auto g = net::load_network(o.net);
  const auto ext = net::extend_with_supersink(g);
  const net::TransitionMatrix p(ext);
  std::size_t movements = 0, entries = 0, exits = 0;
  for (std::size_t l = 0; l < ext.real_link_count(); ++l) {
    movements += ext.out_edges(l).size();
    entries += ext.link(l).is_entry ? 1 : 0;
    exits += ext.is_exit(l) ? 1 : 0;
  }
  std::cout << "ok: " << ext.real_link_count() << " links (" << entries << " entry, " << exits << " exit), "
            << movements - exits << " movements, P is " << p.size() << "x" << p.size()
            << (p.is_dense() ? " dense" : " sparse") << "\n";
  return kExitOk;
}

int net_matrix(const NetOpts& o) {
  const auto ext = net::extend_with_supersink(net::load_network(o.net));
  const net::TransitionMatrix p(ext);
  if (o.out.empty()) {
    net::write_matrix_csv(std::cout, p);
  } else {
    auto os = open_out(o.out);
    net::write_matrix_csv(os, p);
  }
  return kExitOk;
}

// ---- pressure ----

struct PressureOpts {
  std::string net, queues, out;
  int hop = 0;
  bool all_hops = false;
  bool density = false;
  bool unrolled = false;
};

int pressure_compute(const PressureOpts& o) {
  if (o.hop < 0) throw std::invalid_argument("--hop must be >= 0");
  const auto ext = net::extend_with_supersink(net::load_network(o.net));
  const net::TransitionMatrix p(ext);
  std::ifstream qs(o.queues);
  if (!qs) throw std::runtime_error("cannot read " + o.queues);
  const auto values = net::read_queue_csv(qs, ext);
  const auto q = net::QueueSnapshot::from_counts(ext, values, o.density ? net::QueueUnits::Density : net::QueueUnits::Vehicles);

  std::vector<pressure::PressureVector> cols;
  if (o.all_hops) {
    cols = o.unrolled ? std::vector<pressure::PressureVector>{} : pressure::pressure_history(p, q, o.hop);
    if (o.unrolled)
      for (int h = 0; h <= o.hop; ++h) cols.push_back(pressure::pressure_vector_unrolled(p, q, h));
  } else {
    cols.push_back(o.unrolled ? pressure::pressure_vector_unrolled(p, q, o.hop) : pressure::pressure_vector(p, q, o.hop));
  }
  std::ostringstream os;
  os.precision(17);
  os << "link";
  for (const auto& c : cols) os << ",p" << c.hop;
  os << '\n';
  for (std::size_t l = 0; l < ext.size(); ++l) {
    os << ext.name(l);
    for (const auto& c : cols) os << ',' << c.values[static_cast<Eigen::Index>(l)];
    os << '\n';
  }
  if (o.out.empty()) {
    std::cout << os.str();
  } else {
    auto f = open_out(o.out);
    f << os.str();
  }
  return kExitOk;
}

// ---- sim ----

struct SimOpts {
  std::string scenario = "net1x2-heavy";
  std::string controller = "webster";
  std::string policy;
  std::string out;
  std::string trace;
  int hop = 0;
  std::uint64_t seed = 0;
  int seeds = 1;
};

harness::ControllerSpec controller_spec(const std::string& kind, int hop, const std::string& policy_path) {
  harness::ControllerSpec spec;
  spec.kind = kind;
  spec.hop = hop;
  if (kind == "rl") {
    if (policy_path.empty()) throw std::invalid_argument("--controller rl needs --policy <checkpoint>");
    spec.policy = std::make_shared<const rl::PolicySet>(rl::load_policy_file(policy_path));
    spec.hop = spec.policy->obs.hop;
  }
  return spec;
}

int sim_run(const SimOpts& o) {
  const auto scenario = harness::resolve_scenario(o.scenario);
  const auto spec = controller_spec(o.controller, o.hop, o.policy);
  std::vector<std::uint64_t> seeds;
  for (int k = 0; k < std::max(1, o.seeds); ++k) seeds.push_back(o.seed + static_cast<std::uint64_t>(k));
  std::vector<sim::MetricsLog> logs;
  const auto row = harness::evaluate(scenario, spec, seeds, 0, o.trace.empty() ? nullptr : &logs);
  if (o.out.empty()) {
    harness::write_metrics_csv(std::cout, row.episodes);
  } else {
    auto os = open_out(o.out);
    harness::write_metrics_csv(os, row.episodes);
    harness::write_manifest(manifest_path_for(o.out),
                            harness::make_manifest(g_command, scenario, seeds,
                                                   {{"controller", o.controller}, {"hop", spec.hop}, {"policy", o.policy}}));
  }
  if (!o.trace.empty()) {
    // trace of the first seed, with queues at every decision epoch
    sim::EpisodeOptions eo;
    eo.trace_queues = true;
    auto c = harness::make_controller(spec);
    const auto m = sim::run_episode(scenario, *c, seeds.front(), eo);
    auto os = open_out(o.trace);
    harness::write_queue_trace_csv(os, scenario, m);
  }
  std::cerr << scenario.name << " " << spec.label() << ": TTS " << row.tts_h.mean << " h (sd " << row.tts_h.std
            << "), queue " << row.queue_h.mean << " h, virtual " << row.virtual_h.mean << " h over " << seeds.size()
            << " seed(s)\n";
  return kExitOk;
}

// ---- rl ----

struct TrainOpts {
  std::string scenario = "net1x2-heavy";
  std::string reward = "potential";
  std::string out = "rl_out";
  int hop = 1;
  int episodes = 0;
  int iterations = -1;
  int episodes_per_iteration = -1;
  std::uint64_t seed = 0;
  double lr = -1.0;
  bool stacked = false;
  bool shared = false;
};

rl::TrainConfig train_config(const TrainOpts& o) {
  rl::TrainConfig cfg;
  cfg.obs.hop = o.hop;
  cfg.obs.stacked = o.stacked;
  cfg.reward = rl::parse_reward_mode(o.reward);
  cfg.shared = o.shared;
  cfg.seed = o.seed;
  if (o.episodes_per_iteration > 0) cfg.episodes_per_iteration = o.episodes_per_iteration;
  if (o.iterations >= 0) cfg.iterations = o.iterations;
  if (o.episodes > 0) cfg.iterations = std::max(1, o.episodes / cfg.episodes_per_iteration);
  if (o.lr > 0.0) cfg.ppo.lr = o.lr;
  return cfg;
}

json train_config_json(const rl::TrainConfig& c) {
  return {{"hop", c.obs.hop},
          {"stacked", c.obs.stacked},
          {"reward", rl::to_string(c.reward)},
          {"shared", c.shared},
          {"reward_scale", c.reward_scale},
          {"normalize_returns", c.normalize_returns},
          {"iterations", c.iterations},
          {"episodes_per_iteration", c.episodes_per_iteration},
          {"eval_every", c.eval_every},
          {"eval_seeds", c.eval_seeds},
          {"seed", c.seed},
          {"ppo",
           {{"gamma", c.ppo.gamma},
            {"lambda", c.ppo.lambda},
            {"clip", c.ppo.clip},
            {"epochs", c.ppo.epochs},
            {"minibatch", c.ppo.minibatch},
            {"lr", c.ppo.lr},
            {"entropy_coef", c.ppo.entropy_coef},
            {"value_coef", c.ppo.value_coef},
            {"max_grad_norm", c.ppo.max_grad_norm},
            {"hidden", c.ppo.hidden},
            {"init_log_std", c.ppo.init_log_std},
            {"critic_time_feature", c.ppo.critic_time_feature}}}};
}

int rl_train(const TrainOpts& o) {
  const auto scenario = harness::resolve_scenario(o.scenario);
  const auto cfg = train_config(o);
  fs::create_directories(o.out);
  const auto res = rl::train(scenario, cfg, [](const rl::LearningRow& r) {
    if (!std::isnan(r.eval_tts_h))
      std::cerr << "iteration " << r.iteration << ": mean reward " << r.mean_reward << ", eval TTS " << r.eval_tts_h
                << " h\n";
  });
  rl::save_policy_file((fs::path(o.out) / "policy.txt").string(), res.last);
  rl::save_policy_file((fs::path(o.out) / "best_policy.txt").string(), res.best);
  {
    auto os = open_out(fs::path(o.out) / "learning_curve.csv");
    rl::write_learning_curve_csv(os, res.curve);
  }
  auto manifest = harness::make_manifest(g_command, scenario, cfg.eval_seeds, train_config_json(cfg));
  manifest["best_iteration"] = res.best_iteration;
  manifest["best_eval_tts_h"] = res.best_eval_tts_h;
  harness::write_manifest(fs::path(o.out) / "manifest.json", manifest);
  std::cerr << "wrote " << o.out << "/policy.txt (final iterate); best eval TTS " << res.best_eval_tts_h
            << " h at iteration " << res.best_iteration << " in best_policy.txt\n";
  return kExitOk;
}

// ---- bench ----

struct BenchOpts {
  std::vector<std::string> scenarios = {"net1x2-heavy"};
  std::vector<int> hops = {0, 1, 2};
  std::string out = "bench_out";
  int seeds = 10;
  int train_iterations = -1;
  std::uint64_t train_seed = 0;
  bool presslight = true;
};

int bench(const BenchOpts& o) {
  fs::create_directories(o.out);
  std::vector<harness::ResultRow> rows;
  const auto seeds = harness::default_seeds(static_cast<std::size_t>(o.seeds));
  json runs = json::array();
  for (const auto& name : o.scenarios) {
    const auto scenario = harness::resolve_scenario(name);
    for (const char* kind : {"webster", "maxpressure"}) {
      harness::ControllerSpec spec;
      spec.kind = kind;
      rows.push_back(harness::evaluate(scenario, spec, seeds));
      std::cerr << name << " " << spec.label() << ": TTS " << rows.back().tts_h.mean << " h\n";
    }
    auto run_rl = [&](int hop, rl::RewardMode mode, const std::string& label) {
      TrainOpts t;
      t.hop = hop;
      t.seed = o.train_seed;
      t.reward = rl::to_string(mode);
      t.iterations = o.train_iterations;
      const auto cfg = train_config(t);
      const auto res = rl::train(scenario, cfg);
      const auto dir = fs::path(o.out) / (name + "-" + label + "-h" + std::to_string(hop));
      fs::create_directories(dir);
      rl::save_policy_file((dir / "policy.txt").string(), res.last);
      auto os = open_out(dir / "learning_curve.csv");
      rl::write_learning_curve_csv(os, res.curve);
      harness::ControllerSpec spec;
      spec.kind = "rl";
      spec.hop = hop;
      spec.policy = std::make_shared<const rl::PolicySet>(res.last);
      auto row = harness::evaluate(scenario, spec, seeds);
      row.method = label;
      std::cerr << name << " " << label << "-h" << hop << ": TTS " << row.tts_h.mean << " h\n";
      rows.push_back(std::move(row));
      runs.push_back({{"scenario", name}, {"method", label}, {"config", train_config_json(cfg)}});
    };
    if (o.presslight) run_rl(0, rl::RewardMode::Pressure, "presslight");
    for (int h : o.hops) run_rl(h, rl::RewardMode::Potential, "rl");
  }
  {
    auto os = open_out(fs::path(o.out) / "results.csv");
    harness::write_result_table_csv(os, rows);
    auto ps = open_out(fs::path(o.out) / "per_seed.csv");
    harness::write_per_seed_csv(ps, rows);
  }
  harness::write_result_table_csv(std::cout, rows);
  json m;
  m["tool"] = "mhp";
  m["version"] = harness::version();
  m["command"] = g_command;
  m["seeds"] = seeds;
  m["scenarios"] = o.scenarios;
  m["training"] = runs;
  harness::write_manifest(fs::path(o.out) / "manifest.json", m);
  return kExitOk;
}

// ---- report ----

struct ReportOpts {
  std::string scenario = "net1x2-heavy";
  std::string policy;
  std::vector<std::string> policies;
  std::string controller = "rl";
  std::string out;
  int hop = 0;
  int episodes = 20;
  int seeds = 10;
  std::uint64_t seed = 0;
  std::size_t intersection = 0;
  double from_min = 0.0, to_min = 30.0;
  double min_ratio = std::nan("");
  double max_r = std::nan("");
  bool assert_pattern = false;
};

int report_correlation(const ReportOpts& o) {
  const auto scenario = harness::resolve_scenario(o.scenario);
  const auto spec = controller_spec("rl", 0, o.policy);
  std::vector<std::uint64_t> seeds;
  for (int k = 0; k < o.episodes; ++k) seeds.push_back(o.seed + static_cast<std::uint64_t>(k));
  const auto row = harness::evaluate(scenario, spec, seeds);
  std::vector<double> reward, tts;
  for (const auto& e : row.episodes) {
    reward.push_back(e.reward);
    tts.push_back(e.tts_h);
  }
  const double r = harness::pearson(reward, tts);
  std::cout << "pearson_r," << r << "\n";
  if (!o.out.empty()) {
    auto os = open_out(o.out);
    harness::write_scatter_csv(os, reward, tts);
  }
  if (!std::isnan(o.max_r) && !(r <= o.max_r))
    throw AssertionFailed("correlation " + std::to_string(r) + " is above " + std::to_string(o.max_r));
  return kExitOk;
}

int report_splits(const ReportOpts& o) {
  const auto scenario = harness::resolve_scenario(o.scenario);
  const auto spec = controller_spec(o.controller, o.hop, o.policy);
  auto c = harness::make_controller(spec);
  const auto log = sim::run_episode(scenario, *c, o.seed);
  const auto s = harness::split_report(log, o.intersection, o.from_min * 60.0, o.to_min * 60.0);
  const auto& x = scenario.intersections.at(o.intersection);
  std::cout << "phase,mean_split\n";
  for (std::size_t p = 0; p < s.mean_splits.size(); ++p) std::cout << x.phases[p].label << ',' << s.mean_splits[p] << '\n';
  if (s.mean_splits.size() >= 2) {
    const double ratio = s.ratio(0, 1);
    std::cout << "ratio_" << x.phases[0].label << "_" << x.phases[1].label << "," << ratio << '\n';
    if (!std::isnan(o.min_ratio) && !(ratio >= o.min_ratio))
      throw AssertionFailed("split ratio " + std::to_string(ratio) + " is below " + std::to_string(o.min_ratio));
  }
  return kExitOk;
}

int report_hops(const ReportOpts& o) {
  const auto scenario = harness::resolve_scenario(o.scenario);
  const auto seeds = harness::default_seeds(static_cast<std::size_t>(o.seeds));
  std::vector<harness::ResultRow> rows;
  for (const auto& p : o.policies) rows.push_back(harness::evaluate(scenario, controller_spec("rl", 0, p), seeds));
  const auto hops = harness::tts_vs_hop(rows);
  harness::write_hop_csv(std::cout, hops);
  if (!o.out.empty()) {
    auto os = open_out(o.out);
    harness::write_hop_csv(os, hops);
  }
  if (o.assert_pattern && hops.size() >= 2) {
    const bool under = scenario.name.find("under") != std::string::npos;
    if (under) {
      const double rel = std::abs(hops.back().tts_h.mean - hops.front().tts_h.mean) / hops.front().tts_h.mean;
      if (rel > 0.05) throw AssertionFailed("undersaturated TTS changes by " + std::to_string(100 * rel) + "% across hops");
    } else {
      for (std::size_t k = 1; k < hops.size(); ++k)
        if (!(hops[k].tts_h.mean < hops[k - 1].tts_h.mean))
          throw AssertionFailed("TTS does not decrease from hop " + std::to_string(hops[k - 1].hop) + " to hop " +
                                std::to_string(hops[k].hop));
    }
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  for (int i = 0; i < argc; ++i) g_command += (i ? " " : "") + std::string(argv[i]);

  CLI::App app{"Multi-hop pressure signal control laboratory"};
  app.set_version_flag("--version", std::string(harness::version()));
  app.require_subcommand(1);
  std::function<int()> action;

  auto* net_cmd = app.add_subcommand("net", "Network files");
  net_cmd->require_subcommand(1);
  NetOpts net_o;
  auto* nv = net_cmd->add_subcommand("validate", "Validate a network file");
  nv->add_option("--net", net_o.net, "Network JSON")->required();
  nv->callback([&] { action = [&] { return net_validate(net_o); }; });
  auto* nm = net_cmd->add_subcommand("matrix", "Write the transition matrix as CSV");
  nm->add_option("--net", net_o.net, "Network JSON")->required();
  nm->add_option("--out", net_o.out, "Output CSV (default stdout)");
  nm->callback([&] { action = [&] { return net_matrix(net_o); }; });

  auto* pr_cmd = app.add_subcommand("pressure", "Pressure vectors");
  pr_cmd->require_subcommand(1);
  PressureOpts pr_o;
  auto* pc = pr_cmd->add_subcommand("compute", "Compute link pressures");
  pc->add_option("--net", pr_o.net, "Network JSON")->required();
  pc->add_option("--queues", pr_o.queues, "Queue CSV")->required();
  pc->add_option("--hop", pr_o.hop, "Hop count H");
  pc->add_flag("--all-hops", pr_o.all_hops, "Emit p(0)..p(H)");
  pc->add_flag("--density", pr_o.density, "Queues as vehicles per km");
  pc->add_flag("--unrolled", pr_o.unrolled, "Use the unrolled evaluation");
  pc->add_option("--out", pr_o.out, "Output CSV (default stdout)");
  pc->callback([&] { action = [&] { return pressure_compute(pr_o); }; });

  auto* sim_cmd = app.add_subcommand("sim", "Simulation");
  sim_cmd->require_subcommand(1);
  SimOpts sim_o;
  auto* sr = sim_cmd->add_subcommand("run", "Run episodes with one controller");
  sr->add_option("--scenario", sim_o.scenario, "Catalog name or scenario JSON");
  sr->add_option("--controller", sim_o.controller, "webster|maxpressure|greedy|fixed|rl")
      ->check(CLI::IsMember({"webster", "maxpressure", "greedy", "fixed", "rl"}));
  sr->add_option("--hop", sim_o.hop, "Hop count for pressure controllers");
  sr->add_option("--policy", sim_o.policy, "Policy checkpoint (rl)");
  sr->add_option("--seed", sim_o.seed, "First seed");
  sr->add_option("--seeds", sim_o.seeds, "Number of consecutive seeds");
  sr->add_option("--out", sim_o.out, "Per-episode CSV (default stdout)");
  sr->add_option("--trace", sim_o.trace, "Queue trace CSV of the first seed");
  sr->callback([&] { action = [&] { return sim_run(sim_o); }; });

  auto* rl_cmd = app.add_subcommand("rl", "Reinforcement learning");
  rl_cmd->require_subcommand(1);
  TrainOpts tr_o;
  auto* rt = rl_cmd->add_subcommand("train", "Train per-intersection PPO agents");
  rt->add_option("--scenario", tr_o.scenario, "Catalog name or scenario JSON");
  rt->add_option("--hop", tr_o.hop, "Hop count H");
  rt->add_option("--reward", tr_o.reward, "potential|pressure")->check(CLI::IsMember({"potential", "pressure"}));
  rt->add_option("--episodes", tr_o.episodes, "Training episode budget");
  rt->add_option("--iterations", tr_o.iterations, "PPO iterations (overridden by --episodes)");
  rt->add_option("--episodes-per-iteration", tr_o.episodes_per_iteration, "Rollouts per iteration");
  rt->add_option("--lr", tr_o.lr, "Learning rate");
  rt->add_flag("--stacked", tr_o.stacked, "Observe pressures for every hop 0..H");
  rt->add_flag("--shared", tr_o.shared, "Share parameters across intersections");
  rt->add_option("--seed", tr_o.seed, "Training seed");
  rt->add_option("--out", tr_o.out, "Output directory");
  rt->callback([&] { action = [&] { return rl_train(tr_o); }; });

  BenchOpts b_o;
  auto* bc = app.add_subcommand("bench", "Train and evaluate every method on catalog scenarios");
  bc->add_option("--scenario", b_o.scenarios, "Scenario names")->expected(1, -1);
  bc->add_option("--hops", b_o.hops, "Hop levels for the potential-reward agents")->expected(1, -1);
  bc->add_option("--seeds", b_o.seeds, "Evaluation seeds 0..n-1");
  bc->add_option("--train-iterations", b_o.train_iterations, "PPO iterations per agent set");
  bc->add_option("--train-seed", b_o.train_seed, "Training seed");
  bc->add_flag("!--no-presslight", b_o.presslight, "Skip the pressure-reward ablation");
  bc->add_option("--out", b_o.out, "Output directory");
  bc->callback([&] { action = [&] { return bench(b_o); }; });

  auto* rep = app.add_subcommand("report", "Diagnostics");
  rep->require_subcommand(1);
  ReportOpts r_o;
  auto* rc = rep->add_subcommand("correlation", "Pearson r between episode reward and TTS");
  rc->add_option("--scenario", r_o.scenario, "Catalog name or scenario JSON");
  rc->add_option("--policy", r_o.policy, "Policy checkpoint")->required();
  rc->add_option("--episodes", r_o.episodes, "Evaluation episodes");
  rc->add_option("--seed", r_o.seed, "First seed");
  rc->add_option("--out", r_o.out, "Scatter CSV");
  rc->add_option("--assert-max-r", r_o.max_r, "Fail (exit 2) unless r <= value");
  rc->callback([&] { action = [&] { return report_correlation(r_o); }; });
  auto* rs = rep->add_subcommand("splits", "Time-weighted mean splits of one intersection");
  rs->add_option("--scenario", r_o.scenario, "Catalog name or scenario JSON");
  rs->add_option("--controller", r_o.controller, "Controller kind");
  rs->add_option("--policy", r_o.policy, "Policy checkpoint (rl)");
  rs->add_option("--hop", r_o.hop, "Hop count for pressure controllers");
  rs->add_option("--seed", r_o.seed, "Seed");
  rs->add_option("--intersection", r_o.intersection, "Intersection index");
  rs->add_option("--from-min", r_o.from_min, "Window start (min)");
  rs->add_option("--to-min", r_o.to_min, "Window end (min)");
  rs->add_option("--assert-min-ratio", r_o.min_ratio, "Fail (exit 2) unless phase0:phase1 >= value");
  rs->callback([&] { action = [&] { return report_splits(r_o); }; });
  auto* rh = rep->add_subcommand("hops", "TTS per hop level from trained policies");
  rh->add_option("--scenario", r_o.scenario, "Catalog name or scenario JSON");
  rh->add_option("--policies", r_o.policies, "Policy checkpoints, one per hop")->required()->expected(1, -1);
  rh->add_option("--seeds", r_o.seeds, "Evaluation seeds 0..n-1");
  rh->add_option("--out", r_o.out, "Output CSV");
  rh->add_flag("--assert", r_o.assert_pattern, "Fail (exit 2) unless the expected hop pattern holds");
  rh->callback([&] { action = [&] { return report_hops(r_o); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalid;
  }
  try {
    return action ? action() : kExitInvalid;
  } catch (const AssertionFailed& e) {
    std::cerr << "assertion failed: " << e.what() << "\n";
    return kExitAssert;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
}
