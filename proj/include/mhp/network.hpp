#pragma once

// Link-level road graph, supersink extension and the Markov transition matrix.
//
// Vertices are road links (not intersections). Every index that appears in a
// vector or matrix anywhere in the library follows ExtendedGraph's
// index_order(): real links in declaration order, the supersink last.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace mhp::net {

using LinkIndex = std::size_t;

inline constexpr double kRatioTolerance = 1e-9;
inline constexpr const char* kSupersinkName = "SINK";

enum class NetworkErrorKind {
  DuplicateLink,
  DanglingMovement,
  RatioSumViolation,
  NoExitLink,
  UnknownLink,
  InvalidLink,
  InvalidMovement,
  InconsistentExit,
  DimensionMismatch,
  InvalidQueue,
  Parse,
};

const char* to_string(NetworkErrorKind kind);

class NetworkError : public std::runtime_error {
 public:
  NetworkError(NetworkErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  NetworkErrorKind kind() const noexcept { return kind_; }

 private:
  NetworkErrorKind kind_;
};

struct Link {
  std::string id;
  double length_m = 300.0;
  int storage_capacity = 40;
  double saturation_flow_vph = 1800.0;
  double free_flow_time_s = 36.0;
  bool is_entry = false;
  // Filled in by build_graph from topology. If set before build_graph it is
  // treated as an assertion and checked.
  std::optional<bool> is_exit;
};

struct Movement {
  std::string from;
  std::string to;
  double turning_ratio = 1.0;
};

struct Edge {
  LinkIndex to;
  double ratio;
};

/// Validated road graph without the supersink.
class LinkGraph {
 public:
  std::size_t size() const noexcept { return links_.size(); }
  const std::vector<Link>& links() const noexcept { return links_; }
  const Link& link(LinkIndex i) const { return links_.at(i); }
  bool is_exit(LinkIndex i) const { return out_.at(i).empty(); }

  /// Outgoing movements of link i with renormalized ratios.
  std::span<const Edge> successors(LinkIndex i) const { return out_.at(i); }

  LinkIndex index_of(const std::string& id) const;
  std::optional<LinkIndex> find(const std::string& id) const;

 private:
  friend LinkGraph build_graph(std::vector<Link>, const std::vector<Movement>&);

  std::vector<Link> links_;
  std::vector<std::vector<Edge>> out_;
  std::unordered_map<std::string, LinkIndex> symbols_;
};

/// Throws NetworkError with kind DuplicateLink, DanglingMovement,
/// RatioSumViolation (message carries link id and the actual sum),
/// InvalidLink, InvalidMovement or InconsistentExit.
LinkGraph build_graph(std::vector<Link> links, const std::vector<Movement>& movements);

/// Graph with the supersink appended as the final vertex. Exit links have a
/// single edge to the supersink; the supersink has a single self-loop.
class ExtendedGraph {
 public:
  std::size_t size() const noexcept { return out_.size(); }
  std::size_t real_link_count() const noexcept { return links_.size(); }
  LinkIndex supersink() const noexcept { return links_.size(); }
  bool is_supersink(LinkIndex i) const noexcept { return i == supersink(); }

  const std::vector<Link>& links() const noexcept { return links_; }
  const Link& link(LinkIndex i) const;
  bool is_exit(LinkIndex i) const;
  std::vector<LinkIndex> entry_links() const;

  std::span<const Edge> out_edges(LinkIndex i) const;
  std::span<const Edge> in_edges(LinkIndex i) const;  // Edge::to holds the source here

  const std::vector<std::string>& index_order() const noexcept { return names_; }
  const std::string& name(LinkIndex i) const { return names_.at(i); }
  LinkIndex index_of(const std::string& id) const;
  std::optional<LinkIndex> find(const std::string& id) const;

 private:
  friend ExtendedGraph extend_with_supersink(const LinkGraph&);

  std::vector<Link> links_;
  std::vector<std::vector<Edge>> out_;
  std::vector<std::vector<Edge>> in_;
  std::vector<std::string> names_;
  std::unordered_map<std::string, LinkIndex> symbols_;
};

/// Throws NetworkError{NoExitLink} when the graph has no exit link or when
/// some link cannot reach an exit (the chain would not be absorbing).
ExtendedGraph extend_with_supersink(const LinkGraph& graph);

/// Links j with a directed path of exactly h edges j -> ... -> l. Sorted.
std::vector<LinkIndex> upstream_neighbors(const ExtendedGraph& graph, LinkIndex l, int h);
/// Links j with a directed path of exactly h edges l -> ... -> j. Sorted.
std::vector<LinkIndex> downstream_neighbors(const ExtendedGraph& graph, LinkIndex l, int h);

/// Row-stochastic transition matrix P over the extended link set.
///
/// Stored dense up to kDenseLimit vertices and sparse above. Immutable after
/// construction.
class TransitionMatrix {
 public:
  static constexpr std::size_t kDenseLimit = 512;

  explicit TransitionMatrix(const ExtendedGraph& graph);

  /// Builds from an explicit matrix. Validates squareness, nonnegativity,
  /// row sums and the absorbing last row. `names` defaults to "0".."n-1".
  static TransitionMatrix from_dense(const Eigen::MatrixXd& entries,
                                     std::vector<std::string> names = {});

  std::size_t size() const noexcept { return n_; }
  bool is_dense() const noexcept { return dense_storage_; }
  double entry(LinkIndex i, LinkIndex j) const;
  const std::vector<std::string>& index_order() const noexcept { return names_; }

  /// P v
  Eigen::VectorXd multiply(const Eigen::VectorXd& v) const;
  /// P^T v
  Eigen::VectorXd multiply_transposed(const Eigen::VectorXd& v) const;

  Eigen::MatrixXd dense() const;
  const Eigen::SparseMatrix<double, Eigen::RowMajor>& sparse() const noexcept { return sparse_; }

  /// P^h as a dense matrix (h >= 0).
  Eigen::MatrixXd power(int h) const;

 private:
  TransitionMatrix() = default;
  void validate() const;

  std::size_t n_ = 0;
  bool dense_storage_ = true;
  Eigen::MatrixXd dense_;
  Eigen::SparseMatrix<double, Eigen::RowMajor> sparse_;
  std::vector<std::string> names_;
};

/// P^0 .. P^max_hop, computed once and shared read-only.
class MatrixPowers {
 public:
  MatrixPowers(const TransitionMatrix& p, int max_hop);

  int max_hop() const noexcept { return static_cast<int>(count_) - 1; }
  std::size_t size() const noexcept { return n_; }
  double entry(int h, LinkIndex j, LinkIndex l) const;
  /// Column l of P^h.
  Eigen::VectorXd column(int h, LinkIndex l) const;

 private:
  void check_hop(int h) const;

  std::size_t n_;
  std::size_t count_;
  bool dense_storage_;
  std::vector<Eigen::MatrixXd> dense_;
  std::vector<Eigen::SparseMatrix<double, Eigen::ColMajor>> sparse_;
};

enum class QueueUnits {
  Vehicles,
  Density,  // vehicles per km of link length
};

/// Queue vector Q aligned to index_order; nonnegative with a zero supersink entry.
class QueueSnapshot {
 public:
  /// `queues` holds either one value per real link or one per extended vertex
  /// (supersink last, must be 0).
  static QueueSnapshot from_counts(const ExtendedGraph& graph, std::span<const double> queues,
                                   QueueUnits units = QueueUnits::Vehicles);
  static QueueSnapshot from_vector(Eigen::VectorXd values);
  static QueueSnapshot zeros(std::size_t n);

  std::size_t size() const noexcept { return static_cast<std::size_t>(values_.size()); }
  const Eigen::VectorXd& values() const noexcept { return values_; }
  double operator[](LinkIndex i) const { return values_(static_cast<Eigen::Index>(i)); }

 private:
  explicit QueueSnapshot(Eigen::VectorXd v) : values_(std::move(v)) {}
  Eigen::VectorXd values_;
};

}  // namespace mhp::net
