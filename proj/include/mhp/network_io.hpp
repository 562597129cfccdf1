#pragma once

// Network file format (JSON):
//
//   {
//     "defaults": { "length_m": 300, "capacity_veh": 40, ... },   // optional
//     "links": [
//       { "id": "EB0", "length_m": 300, "capacity_veh": 40, "sat_flow_vph": 1800,
//         "ff_time_s": 36, "entry": true, "exit": false }
//     ],
//     "movements": [ { "from": "EB0", "to": "EB1", "ratio": 1 } ]
//   }
//
// Link ids may be strings or integers. "exit" is optional and, when present,
// must agree with topology. "ratio" is a number or an exact fraction string
// such as "1/3".

#include "mhp/network.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>

namespace mhp::net {

double parse_ratio(const nlohmann::json& value);

LinkGraph parse_network(const nlohmann::json& doc);
LinkGraph load_network(const std::filesystem::path& path);

nlohmann::json read_json_file(const std::filesystem::path& path);

/// Writes P as CSV with a header row of link ids and one labelled row per link.
void write_matrix_csv(std::ostream& os, const TransitionMatrix& p);

/// Reads a queue CSV: either `link,queue` rows (header optional) or a single
/// row/column of numbers in index order. Returns values for the real links.
std::vector<double> read_queue_csv(std::istream& is, const ExtendedGraph& graph);

}  // namespace mhp::net
