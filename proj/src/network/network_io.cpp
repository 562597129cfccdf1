#include "mhp/network_io.hpp"

#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace mhp::net {

namespace {

using nlohmann::json;

[[noreturn]] void parse_fail(const std::string& msg) {
  throw NetworkError(NetworkErrorKind::Parse, "Parse: " + msg);
}

std::string id_string(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  parse_fail("link ids must be strings or integers, got " + v.dump());
}

double number_field(const json& obj, const json& defaults, const char* key, double fallback) {
  if (obj.contains(key)) {
    if (!obj[key].is_number()) parse_fail(std::string("field '") + key + "' must be numeric");
    return obj[key].get<double>();
  }
  if (defaults.contains(key)) return defaults[key].get<double>();
  return fallback;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n\"");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n\"");
  return s.substr(b, e - b + 1);
}

}  // namespace

double parse_ratio(const json& value) {
  if (value.is_number()) return value.get<double>();
  if (!value.is_string()) parse_fail("ratio must be a number or fraction string");
  const auto text = value.get<std::string>();
  const auto slash = text.find('/');
  try {
    if (slash == std::string::npos) return std::stod(text);
    const double num = std::stod(text.substr(0, slash));
    const double den = std::stod(text.substr(slash + 1));
    if (den == 0.0) parse_fail("zero denominator in ratio '" + text + "'");
    return num / den;
  } catch (const std::logic_error&) {
    parse_fail("cannot parse ratio '" + text + "'");
  }
}

LinkGraph parse_network(const json& doc) {
  if (!doc.is_object() || !doc.contains("links") || !doc["links"].is_array())
    parse_fail("network document needs a 'links' array");
  const json defaults = doc.value("defaults", json::object());
  const Link base;

  std::vector<Link> links;
  for (const auto& item : doc["links"]) {
    if (!item.is_object() || !item.contains("id")) parse_fail("every link needs an 'id'");
    Link link;
    link.id = id_string(item["id"]);
    link.length_m = number_field(item, defaults, "length_m", base.length_m);
    link.storage_capacity =
        static_cast<int>(number_field(item, defaults, "capacity_veh", base.storage_capacity));
    link.saturation_flow_vph = number_field(item, defaults, "sat_flow_vph", base.saturation_flow_vph);
    link.free_flow_time_s = number_field(item, defaults, "ff_time_s", base.free_flow_time_s);
    link.is_entry = item.value("entry", false);
    if (item.contains("exit")) link.is_exit = item["exit"].get<bool>();
    links.push_back(std::move(link));
  }

  std::vector<Movement> movements;
  for (const auto& item : doc.value("movements", json::array())) {
    if (!item.contains("from") || !item.contains("to")) parse_fail("movement needs 'from' and 'to'");
    movements.push_back({id_string(item["from"]), id_string(item["to"]),
                         item.contains("ratio") ? parse_ratio(item["ratio"]) : 1.0});
  }
  return build_graph(std::move(links), movements);
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) parse_fail("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    parse_fail(path.string() + ": " + e.what());
  }
}

LinkGraph load_network(const std::filesystem::path& path) { return parse_network(read_json_file(path)); }

void write_matrix_csv(std::ostream& os, const TransitionMatrix& p) {
  const auto& names = p.index_order();
  os << "link";
  for (const auto& n : names) os << ',' << n;
  os << '\n';
  os << std::setprecision(17);
  for (std::size_t i = 0; i < p.size(); ++i) {
    os << names[i];
    for (std::size_t j = 0; j < p.size(); ++j) os << ',' << p.entry(i, j);
    os << '\n';
  }
}

std::vector<double> read_queue_csv(std::istream& is, const ExtendedGraph& graph) {
  std::vector<std::pair<std::string, std::string>> keyed;
  std::vector<std::string> bare;
  std::string line;
  while (std::getline(is, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::vector<std::string> cells;
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (cells.size() == 2 && !cells[0].empty() && graph.find(cells[0])) {
      keyed.emplace_back(cells[0], cells[1]);
    } else if (cells.size() == 2 && (cells[0] == "link" || cells[0] == "id")) {
      continue;  // header
    } else {
      for (auto& c : cells)
        if (!c.empty()) bare.push_back(c);
    }
  }
  std::vector<double> q(graph.real_link_count(), 0.0);
  auto to_num = [](const std::string& s) {
    try {
      return std::stod(s);
    } catch (const std::logic_error&) {
      parse_fail("bad queue value '" + s + "'");
    }
  };
  if (!keyed.empty()) {
    if (!bare.empty()) parse_fail("queue CSV mixes keyed and positional rows");
    for (const auto& [id, value] : keyed) {
      const auto idx = graph.index_of(id);
      if (graph.is_supersink(idx)) {
        if (to_num(value) != 0.0) parse_fail("supersink queue must be zero");
        continue;
      }
      q[idx] = to_num(value);
    }
    return q;
  }
  if (bare.size() != graph.real_link_count() && bare.size() != graph.size())
    parse_fail("expected " + std::to_string(graph.real_link_count()) + " queue values, got " +
               std::to_string(bare.size()));
  for (std::size_t i = 0; i < graph.real_link_count(); ++i) q[i] = to_num(bare[i]);
  if (bare.size() == graph.size() && to_num(bare.back()) != 0.0)
    parse_fail("supersink queue must be zero");
  return q;
}

}  // namespace mhp::net
