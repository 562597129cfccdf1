#include "mhp/controllers.hpp"
#include "mhp/harness.hpp"
#include "mhp/network_io.hpp"
#include "mhp/pressure.hpp"
#include "mhp/rl/train.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace mhp;

namespace {

struct Network {
  std::shared_ptr<const net::ExtendedGraph> graph;
  std::shared_ptr<const net::TransitionMatrix> p;
};

Network load_network(const std::filesystem::path& path) {
  auto g = std::make_shared<const net::ExtendedGraph>(net::extend_with_supersink(net::load_network(path)));
  return {g, std::make_shared<const net::TransitionMatrix>(*g)};
}

net::QueueSnapshot snapshot(const Network& n, const std::vector<double>& q, bool density) {
  return net::QueueSnapshot::from_counts(*n.graph, q, density ? net::QueueUnits::Density : net::QueueUnits::Vehicles);
}

py::dict summary_dict(const harness::EpisodeSummary& e) {
  py::dict d;
  d["seed"] = e.seed;
  d["tts_h"] = e.tts_h;
  d["queue_h"] = e.queue_h;
  d["virtual_h"] = e.virtual_h;
  d["generated"] = e.generated;
  d["exited"] = e.exited;
  d["reward"] = e.reward;
  return d;
}

harness::ControllerSpec make_spec(const std::string& kind, int hop, const std::string& policy) {
  harness::ControllerSpec spec;
  spec.kind = kind;
  spec.hop = hop;
  if (!policy.empty()) {
    spec.policy = std::make_shared<const rl::PolicySet>(rl::load_policy_file(policy));
    spec.hop = spec.policy->obs.hop;
  }
  return spec;
}

}  // namespace

PYBIND11_MODULE(_mhp, m) {
  m.doc() = "Multi-hop pressure signal control: pressures, simulation, training";
  m.attr("__version__") = harness::version();

  py::register_exception<net::NetworkError>(m, "NetworkError", PyExc_ValueError);
  py::register_exception<sim::ScenarioError>(m, "ScenarioError", PyExc_ValueError);
  py::register_exception<harness::HarnessError>(m, "HarnessError", PyExc_ValueError);
  py::register_exception<sim::SimError>(m, "SimError", PyExc_RuntimeError);

  py::class_<Network>(m, "Network")
      .def_property_readonly("links", [](const Network& n) { return n.graph->index_order(); })
      .def_property_readonly("size", [](const Network& n) { return n.graph->size(); })
      .def("transition_matrix", [](const Network& n) { return n.p->dense(); })
      .def("upstream", [](const Network& n, const std::string& link, int h) {
        std::vector<std::string> out;
        for (auto j : net::upstream_neighbors(*n.graph, n.graph->index_of(link), h)) out.push_back(n.graph->name(j));
        return out;
      }, py::arg("link"), py::arg("hop"))
      .def("pressure", [](const Network& n, const std::vector<double>& q, int hop, bool density) {
        return pressure::pressure_vector(*n.p, snapshot(n, q, density), hop).values;
      }, py::arg("queues"), py::arg("hop"), py::arg("density") = false)
      .def("potential", [](const Network& n, const std::vector<double>& q, int hop) {
        return pressure::upstream_potential(*n.p, snapshot(n, q, false), hop).values;
      }, py::arg("queues"), py::arg("hop"));

  m.def("load_network", &load_network, py::arg("path"));

  m.def("pressure_vector", [](const Eigen::MatrixXd& p, const Eigen::VectorXd& q, int hop, bool unrolled) {
    const auto tm = net::TransitionMatrix::from_dense(p);
    const auto snap = net::QueueSnapshot::from_vector(q);
    return (unrolled ? pressure::pressure_vector_unrolled(tm, snap, hop) : pressure::pressure_vector(tm, snap, hop)).values;
  }, py::arg("P"), py::arg("Q"), py::arg("hop"), py::arg("unrolled") = false,
     "Pressure at `hop` for an absorbing row-stochastic P (supersink last).");

  m.def("catalog", &harness::catalog_names);

  m.def("simulate", [](const std::string& scenario, const std::string& controller, int hop,
                       const std::vector<std::uint64_t>& seeds, const std::string& policy) {
    const auto s = harness::resolve_scenario(scenario);
    py::gil_scoped_release nogil;
    const auto row = harness::evaluate(s, make_spec(controller, hop, policy), seeds);
    py::gil_scoped_acquire gil;
    py::list out;
    for (const auto& e : row.episodes) out.append(summary_dict(e));
    return out;
  }, py::arg("scenario"), py::arg("controller") = "webster", py::arg("hop") = 0,
     py::arg("seeds") = std::vector<std::uint64_t>{0}, py::arg("policy") = "");

  m.def("train", [](const std::string& scenario, int hop, const std::string& reward, int iterations,
                    int episodes_per_iteration, std::uint64_t seed, const std::string& policy_out) {
    const auto s = harness::resolve_scenario(scenario);
    rl::TrainConfig cfg;
    cfg.obs.hop = hop;
    cfg.reward = rl::parse_reward_mode(reward);
    cfg.iterations = iterations;
    cfg.episodes_per_iteration = episodes_per_iteration;
    cfg.seed = seed;
    rl::TrainResult res;
    {
      py::gil_scoped_release nogil;
      res = rl::train(s, cfg);
    }
    if (!policy_out.empty()) rl::save_policy_file(policy_out, res.last);
    py::list curve;
    for (const auto& r : res.curve) {
      py::dict d;
      d["iteration"] = r.iteration;
      d["episodes"] = r.episodes;
      d["mean_reward"] = r.mean_reward;
      d["mean_train_tts_h"] = r.mean_train_tts_h;
      d["eval_tts_h"] = r.eval_tts_h;
      curve.append(d);
    }
    return curve;
  }, py::arg("scenario"), py::arg("hop") = 1, py::arg("reward") = "potential", py::arg("iterations") = 200,
     py::arg("episodes_per_iteration") = 16, py::arg("seed") = 0, py::arg("policy_out") = "");
}
