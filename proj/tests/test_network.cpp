#include "support/oracles.hpp"

#include "mhp/network.hpp"
#include "mhp/network_io.hpp"

#include <doctest.h>
#include <json.hpp>

#include <sstream>

using namespace mhp;
using nlohmann::json;

namespace {

net::NetworkErrorKind error_kind(const json& doc) {
  try {
    net::extend_with_supersink(net::parse_network(doc));
  } catch (const net::NetworkError& e) {
    return e.kind();
  }
  FAIL("expected a NetworkError");
  return net::NetworkErrorKind::Parse;
}

json chain(int n) {
  json doc;
  doc["links"] = json::array();
  doc["movements"] = json::array();
  for (int i = 0; i < n; ++i) {
    json l = {{"id", "L" + std::to_string(i)}};
    if (i == 0) l["entry"] = true;
    doc["links"].push_back(l);
    if (i + 1 < n) doc["movements"].push_back({{"from", "L" + std::to_string(i)}, {"to", "L" + std::to_string(i + 1)}});
  }
  return doc;
}

}  // namespace

TEST_CASE("toy network structure") {
  const auto g = testing::toy_graph();
  CHECK(g.real_link_count() == 8);
  CHECK(g.size() == 9);
  CHECK(g.is_exit(g.index_of("5")));
  CHECK(g.is_exit(g.index_of("7")));
  CHECK_FALSE(g.is_exit(g.index_of("4")));
  CHECK(g.entry_links() == std::vector<std::size_t>{0, 1});
  CHECK(g.index_order().back() == net::kSupersinkName);

  const net::TransitionMatrix p(g);
  const auto d = p.dense();
  for (Eigen::Index i = 0; i < d.rows(); ++i) CHECK(d.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p.entry(g.supersink(), g.supersink()) == 1.0);
  CHECK(p.entry(1, 2) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(p.entry(4, 6) == 0.25);
  CHECK(p.entry(g.index_of("5"), g.supersink()) == 1.0);
}

TEST_CASE("fraction ratios") {
  CHECK(net::parse_ratio(json("1/3")) == doctest::Approx(1.0 / 3.0).epsilon(1e-16));
  CHECK(net::parse_ratio(json(0.25)) == 0.25);
  CHECK_THROWS_AS(net::parse_ratio(json("1/0")), net::NetworkError);
  CHECK_THROWS_AS(net::parse_ratio(json("x")), net::NetworkError);
}

TEST_CASE("neighbour sets match path enumeration") {
  const auto g = testing::toy_graph();
  for (std::size_t l = 0; l < g.size(); ++l)
    for (int h = 0; h <= 5; ++h) CHECK(net::upstream_neighbors(g, l, h) == testing::path_sources(g, l, h));

  CHECK(net::upstream_neighbors(g, 7, 1) == std::vector<std::size_t>{3, 6});
  CHECK(net::upstream_neighbors(g, 7, 2) == std::vector<std::size_t>{1, 4});
  CHECK(net::downstream_neighbors(g, 1, 1) == std::vector<std::size_t>{2, 3});
  CHECK(net::downstream_neighbors(g, 0, 0) == std::vector<std::size_t>{0});
}

TEST_CASE("upstream neighbours are exactly the positive entries of P^h") {
  const auto g = testing::toy_graph();
  const net::TransitionMatrix p(g);
  for (int h = 0; h <= 5; ++h) {
    const auto ph = p.power(h);
    for (std::size_t l = 0; l < g.size(); ++l) {
      std::vector<std::size_t> pos;
      for (std::size_t j = 0; j < g.size(); ++j)
        if (ph(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(l)) > 0.0) pos.push_back(j);
      CHECK(pos == net::upstream_neighbors(g, l, h));
    }
  }
}

TEST_CASE("validation errors") {
  json dup = chain(3);
  dup["links"].push_back({{"id", "L1"}});
  CHECK(error_kind(dup) == net::NetworkErrorKind::DuplicateLink);

  json dangling = chain(3);
  dangling["movements"].push_back({{"from", "L0"}, {"to", "nowhere"}});
  CHECK(error_kind(dangling) == net::NetworkErrorKind::DanglingMovement);

  json bad_sum = chain(3);
  bad_sum["links"].push_back({{"id", "X"}});
  bad_sum["movements"][0]["ratio"] = 0.5;
  bad_sum["movements"].push_back({{"from", "L0"}, {"to", "X"}, {"ratio", 0.4}});
  CHECK(error_kind(bad_sum) == net::NetworkErrorKind::RatioSumViolation);
  try {
    net::parse_network(bad_sum);
  } catch (const net::NetworkError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("L0") != std::string::npos);
    CHECK(msg.find("0.9") != std::string::npos);
  }

  json loop = chain(2);
  loop["movements"].push_back({{"from", "L1"}, {"to", "L0"}});
  CHECK(error_kind(loop) == net::NetworkErrorKind::NoExitLink);

  json flagged = chain(3);
  flagged["links"][1]["exit"] = true;
  CHECK(error_kind(flagged) == net::NetworkErrorKind::InconsistentExit);

  json negative = chain(2);
  negative["links"][0]["length_m"] = -1;
  CHECK(error_kind(negative) == net::NetworkErrorKind::InvalidLink);
}

TEST_CASE("ratios within tolerance are accepted") {
  json doc = chain(2);
  doc["links"].push_back({{"id", "X"}});
  doc["movements"][0]["ratio"] = 0.5 + 4e-10;
  doc["movements"].push_back({{"from", "L0"}, {"to", "X"}, {"ratio", 0.5}});
  CHECK_NOTHROW(net::extend_with_supersink(net::parse_network(doc)));
}

TEST_CASE("sparse storage above the dense limit agrees with dense entries") {
  const int n = static_cast<int>(net::TransitionMatrix::kDenseLimit) + 20;
  const auto g = net::extend_with_supersink(net::parse_network(chain(n)));
  const net::TransitionMatrix p(g);
  CHECK_FALSE(p.is_dense());
  CHECK(p.entry(0, 1) == 1.0);
  CHECK(p.entry(static_cast<std::size_t>(n - 1), g.supersink()) == 1.0);
  Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(static_cast<Eigen::Index>(g.size()), 0.0, 1.0);
  const Eigen::MatrixXd d = p.dense();
  CHECK((p.multiply(v) - d * v).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((p.multiply_transposed(v) - d.transpose() * v).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("from_dense validation") {
  Eigen::MatrixXd ok(2, 2);
  ok << 0.0, 1.0, 0.0, 1.0;
  CHECK_NOTHROW(net::TransitionMatrix::from_dense(ok));
  Eigen::MatrixXd not_absorbing(2, 2);
  not_absorbing << 0.0, 1.0, 0.5, 0.5;
  CHECK_THROWS_AS(net::TransitionMatrix::from_dense(not_absorbing), net::NetworkError);
  Eigen::MatrixXd bad_row(2, 2);
  bad_row << 0.5, 0.4, 0.0, 1.0;
  CHECK_THROWS_AS(net::TransitionMatrix::from_dense(bad_row), net::NetworkError);
  Eigen::MatrixXd rect(2, 3);
  rect.setZero();
  CHECK_THROWS_AS(net::TransitionMatrix::from_dense(rect), net::NetworkError);
}

TEST_CASE("queue snapshots") {
  const auto g = testing::toy_graph();
  const std::vector<double> real(8, 2.0);
  const auto q = net::QueueSnapshot::from_counts(g, real);
  CHECK(q.size() == 9);
  CHECK(q[g.supersink()] == 0.0);

  // 300 m default length: 2 vehicles = 6.666.. veh/km
  const auto d = net::QueueSnapshot::from_counts(g, real, net::QueueUnits::Density);
  CHECK(d[0] == doctest::Approx(2.0 / 0.3));

  std::vector<double> bad = real;
  bad[3] = -1.0;
  CHECK_THROWS_AS(net::QueueSnapshot::from_counts(g, bad), net::NetworkError);
  std::vector<double> sink(9, 1.0);
  CHECK_THROWS_AS(net::QueueSnapshot::from_counts(g, sink), net::NetworkError);
  CHECK_THROWS_AS(net::QueueSnapshot::from_counts(g, std::vector<double>(5, 0.0)), net::NetworkError);
}

TEST_CASE("queue CSV formats") {
  const auto g = testing::toy_graph();
  std::istringstream named("link,queue\n7,0\n0,3\n1,1\n2,1\n3,1\n4,1\n5,0\n6,2\n");
  const auto a = net::read_queue_csv(named, g);
  CHECK(a[0] == 3.0);
  CHECK(a[6] == 2.0);
  std::istringstream row("3,1,1,1,1,0,2,0\n");
  CHECK(net::read_queue_csv(row, g) == a);
  std::istringstream unknown("link,queue\nzz,1\n");
  CHECK_THROWS_AS(net::read_queue_csv(unknown, g), net::NetworkError);
}

TEST_CASE("matrix CSV has a header and one row per vertex") {
  const auto g = testing::toy_graph();
  std::ostringstream os;
  net::write_matrix_csv(os, net::TransitionMatrix(g));
  std::istringstream is(os.str());
  std::string line;
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == 10);
}
