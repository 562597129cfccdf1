#include "mhp/scenario.hpp"

#include "mhp/network_io.hpp"
#include "util/hash.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace mhp::sim {

using nlohmann::json;

double DemandProfile::rate_at(double t) const {
  for (const auto& iv : intervals)
    if (t >= iv.start_s && t < iv.end_s) return iv.rate_vph;
  return 0.0;
}

double DemandProfile::mean_rate(double until_s) const {
  if (until_s <= 0.0) return 0.0;
  double vehicles = 0.0;
  for (const auto& iv : intervals) {
    const double a = std::max(0.0, iv.start_s);
    const double b = std::min(until_s, iv.end_s);
    if (b > a) vehicles += iv.rate_vph * (b - a);
  }
  return vehicles / until_s;
}

std::vector<LinkIndex> Intersection::incoming_links() const {
  std::vector<LinkIndex> out;
  for (const auto& p : phases) out.insert(out.end(), p.incoming_links.begin(), p.incoming_links.end());
  return out;
}

void Scenario::validate() const {
  if (!graph || !transition) throw ScenarioError("scenario '" + name + "' has no network");
  if (!(dt_s > 0.0)) throw ScenarioError("dt_s must be > 0");
  if (!(horizon_s > 0.0)) throw ScenarioError("horizon_s must be > 0");
  if (!(cycle_s > 0.0)) throw ScenarioError("cycle_s must be > 0");
  if (lost_time_s < 0.0) throw ScenarioError("lost_time_s must be >= 0");
  if (!(maxpressure_period_s > 0.0)) throw ScenarioError("maxpressure_period_s must be > 0");

  std::set<LinkIndex> origins;
  for (const auto& d : demands) {
    if (d.origin >= graph->real_link_count()) throw ScenarioError("demand origin out of range");
    if (!graph->link(d.origin).is_entry)
      throw ScenarioError("demand origin '" + graph->name(d.origin) + "' is not an entry link");
    if (!origins.insert(d.origin).second)
      throw ScenarioError("two demand profiles for origin '" + graph->name(d.origin) + "'");
    double last_end = -1e300;
    for (const auto& iv : d.intervals) {
      if (!(iv.end_s > iv.start_s)) throw ScenarioError("demand interval with end <= start");
      if (iv.start_s < last_end) throw ScenarioError("demand intervals overlap or are unordered");
      if (!(iv.rate_vph >= 0.0)) throw ScenarioError("negative demand rate");
      last_end = iv.end_s;
    }
  }

  std::set<std::string> ids;
  for (const auto& x : intersections) {
    if (!ids.insert(x.id).second) throw ScenarioError("duplicate intersection '" + x.id + "'");
    if (x.phases.empty()) throw ScenarioError("intersection '" + x.id + "' has no phases");
    double min_total = 0.0;
    for (const auto& p : x.phases) {
      if (p.min_green_s < 0.0) throw ScenarioError("negative min green");
      min_total += p.min_green_s;
      for (auto l : p.incoming_links) {
        if (l >= graph->real_link_count()) throw ScenarioError("phase link out of range");
        if (graph->is_exit(l))
          throw ScenarioError("exit link '" + graph->name(l) + "' cannot be a signalized approach");
      }
    }
    if (min_total > cycle_s + 1e-9)
      throw ScenarioError("minimum greens of '" + x.id + "' exceed the cycle length");
  }
  std::vector<pressure::Phase> all;
  std::set<LinkIndex> signalized;
  for (const auto& x : intersections)
    for (const auto& p : x.phases) {
      all.push_back(p);
      for (auto l : p.incoming_links)
        if (!signalized.insert(l).second)
          throw ScenarioError("link '" + graph->name(l) + "' is controlled by two phases");
    }
  try {
    pressure::validate_phases(all, graph->size());
  } catch (const std::invalid_argument& e) {
    throw ScenarioError(e.what());
  }
}

std::optional<std::pair<std::size_t, std::size_t>> Scenario::phase_of(LinkIndex l) const {
  for (std::size_t i = 0; i < intersections.size(); ++i)
    for (std::size_t p = 0; p < intersections[i].phases.size(); ++p) {
      const auto& links = intersections[i].phases[p].incoming_links;
      if (std::find(links.begin(), links.end(), l) != links.end()) return std::make_pair(i, p);
    }
  return std::nullopt;
}

Scenario Scenario::scaled(double factor, std::string new_name) const {
  Scenario s = *this;
  s.name = std::move(new_name);
  for (auto& d : s.demands)
    for (auto& iv : d.intervals) iv.rate_vph *= factor;
  s.source_hash = util::hex64(util::fnv1a(source_hash + "*" + std::to_string(factor)));
  return s;
}

std::shared_ptr<const net::ExtendedGraph> make_extended(const net::LinkGraph& g) {
  return std::make_shared<const net::ExtendedGraph>(net::extend_with_supersink(g));
}

namespace {

double get_number(const json& doc, const char* key, double fallback) {
  if (!doc.contains(key)) return fallback;
  if (!doc[key].is_number()) throw ScenarioError(std::string("field '") + key + "' must be numeric");
  return doc[key].get<double>();
}

std::string link_id(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  throw ScenarioError("link references must be strings or integers");
}

}  // namespace

Scenario parse_scenario(const json& doc, const std::filesystem::path& base_dir) {
  if (!doc.is_object()) throw ScenarioError("scenario document must be an object");
  Scenario s;
  s.name = doc.value("name", std::string("scenario"));

  json network_doc;
  if (!doc.contains("network")) throw ScenarioError("scenario needs a 'network'");
  if (doc["network"].is_string()) {
    network_doc = net::read_json_file(base_dir / doc["network"].get<std::string>());
  } else {
    network_doc = doc["network"];
  }
  const net::LinkGraph base_graph = net::parse_network(network_doc);
  s.graph = make_extended(base_graph);
  s.transition = std::make_shared<const net::TransitionMatrix>(*s.graph);

  s.horizon_s = get_number(doc, "horizon_s", s.horizon_s);
  s.dt_s = get_number(doc, "dt_s", s.dt_s);
  s.cycle_s = get_number(doc, "cycle_s", s.cycle_s);
  s.lost_time_s = get_number(doc, "lost_time_s", s.lost_time_s);
  s.maxpressure_period_s = get_number(doc, "maxpressure_period_s", s.maxpressure_period_s);
  s.queue_includes_virtual = doc.value("queue_includes_virtual", s.queue_includes_virtual);
  const double default_min_green = get_number(doc, "min_green_s", 10.0);
  const double scale = get_number(doc, "demand_scale", 1.0);

  auto index_of = [&](const json& v) {
    const auto id = link_id(v);
    auto idx = s.graph->find(id);
    if (!idx || s.graph->is_supersink(*idx)) throw ScenarioError("unknown link '" + id + "'");
    return *idx;
  };

  for (const auto& xi : doc.value("intersections", json::array())) {
    Intersection x;
    x.id = xi.at("id").get<std::string>();
    for (const auto& ph : xi.at("phases")) {
      pressure::Phase phase;
      phase.intersection = x.id;
      phase.label = ph.value("label", std::string("P") + std::to_string(x.phases.size()));
      phase.min_green_s = get_number(ph, "min_green_s", default_min_green);
      for (const auto& l : ph.at("links")) phase.incoming_links.push_back(index_of(l));
      x.phases.push_back(std::move(phase));
    }
    s.intersections.push_back(std::move(x));
  }

  // Optional replication of one demand row onto several origins (used for the
  // side-street placement switch of the 3-intersection arterial).
  for (const auto& di : doc.value("demand", json::array())) {
    std::vector<json> origins;
    if (di.contains("origins")) {
      for (const auto& o : di["origins"]) origins.push_back(o);
    } else {
      origins.push_back(di.at("origin"));
    }
    for (const auto& o : origins) {
      DemandProfile d;
      d.origin = index_of(o);
      d.label = di.value("label", link_id(o));
      for (const auto& row : di.at("profile")) {
        DemandInterval iv;
        if (row.is_array()) {
          iv.start_s = row.at(0).get<double>() * 60.0;
          iv.end_s = row.at(1).get<double>() * 60.0;
          iv.rate_vph = row.at(2).get<double>();
        } else {
          iv.start_s = row.contains("start_s") ? row["start_s"].get<double>() : row.at("start_min").get<double>() * 60.0;
          iv.end_s = row.contains("end_s") ? row["end_s"].get<double>() : row.at("end_min").get<double>() * 60.0;
          iv.rate_vph = row.at("vph").get<double>();
        }
        iv.rate_vph *= scale;
        d.intervals.push_back(iv);
      }
      s.demands.push_back(std::move(d));
    }
  }

  s.source_hash = util::hex64(util::fnv1a(doc.dump() + network_doc.dump()));
  s.validate();
  return s;
}

Scenario load_scenario_file(const std::filesystem::path& path) {
  try {
    return parse_scenario(net::read_json_file(path), path.parent_path());
  } catch (const json::exception& e) {
    throw ScenarioError(path.string() + ": " + e.what());
  }
}

}  // namespace mhp::sim
