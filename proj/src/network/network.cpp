#include "mhp/network.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>

namespace mhp::net {

const char* to_string(NetworkErrorKind kind) {
  switch (kind) {
    case NetworkErrorKind::DuplicateLink: return "DuplicateLink";
    case NetworkErrorKind::DanglingMovement: return "DanglingMovement";
    case NetworkErrorKind::RatioSumViolation: return "RatioSumViolation";
    case NetworkErrorKind::NoExitLink: return "NoExitLink";
    case NetworkErrorKind::UnknownLink: return "UnknownLink";
    case NetworkErrorKind::InvalidLink: return "InvalidLink";
    case NetworkErrorKind::InvalidMovement: return "InvalidMovement";
    case NetworkErrorKind::InconsistentExit: return "InconsistentExit";
    case NetworkErrorKind::DimensionMismatch: return "DimensionMismatch";
    case NetworkErrorKind::InvalidQueue: return "InvalidQueue";
    case NetworkErrorKind::Parse: return "Parse";
  }
  return "Unknown";
}

namespace {

[[noreturn]] void fail(NetworkErrorKind kind, const std::string& msg) {
  throw NetworkError(kind, std::string(to_string(kind)) + ": " + msg);
}

void validate_link(const Link& link) {
  if (link.id.empty()) fail(NetworkErrorKind::InvalidLink, "link with empty id");
  if (link.id == kSupersinkName)
    fail(NetworkErrorKind::InvalidLink, "link id '" + link.id + "' is reserved for the supersink");
  if (!(link.length_m > 0.0))
    fail(NetworkErrorKind::InvalidLink, "link '" + link.id + "' needs length_m > 0");
  if (link.storage_capacity < 1)
    fail(NetworkErrorKind::InvalidLink, "link '" + link.id + "' needs storage_capacity >= 1");
  if (!(link.saturation_flow_vph > 0.0))
    fail(NetworkErrorKind::InvalidLink, "link '" + link.id + "' needs saturation_flow > 0");
  if (!(link.free_flow_time_s > 0.0))
    fail(NetworkErrorKind::InvalidLink, "link '" + link.id + "' needs free_flow_time > 0");
}

LinkIndex lookup(const std::unordered_map<std::string, LinkIndex>& symbols,
                 const std::string& id) {
  auto it = symbols.find(id);
  if (it == symbols.end()) fail(NetworkErrorKind::UnknownLink, "no link named '" + id + "'");
  return it->second;
}

}  // namespace

LinkIndex LinkGraph::index_of(const std::string& id) const { return lookup(symbols_, id); }

std::optional<LinkIndex> LinkGraph::find(const std::string& id) const {
  auto it = symbols_.find(id);
  if (it == symbols_.end()) return std::nullopt;
  return it->second;
}

LinkGraph build_graph(std::vector<Link> links, const std::vector<Movement>& movements) {
  LinkGraph g;
  g.symbols_.reserve(links.size());
  for (std::size_t i = 0; i < links.size(); ++i) {
    validate_link(links[i]);
    if (!g.symbols_.emplace(links[i].id, i).second)
      fail(NetworkErrorKind::DuplicateLink, "link '" + links[i].id + "' declared twice");
  }
  g.out_.assign(links.size(), {});

  for (const auto& m : movements) {
    auto from = g.symbols_.find(m.from);
    auto to = g.symbols_.find(m.to);
    if (from == g.symbols_.end() || to == g.symbols_.end())
      fail(NetworkErrorKind::DanglingMovement,
           "movement " + m.from + " -> " + m.to + " references an unknown link");
    if (!std::isfinite(m.turning_ratio) || m.turning_ratio < 0.0 || m.turning_ratio > 1.0 + kRatioTolerance)
      fail(NetworkErrorKind::InvalidMovement,
           "movement " + m.from + " -> " + m.to + " has ratio outside [0,1]");
    if (m.turning_ratio == 0.0) continue;
    auto& edges = g.out_[from->second];
    if (std::any_of(edges.begin(), edges.end(), [&](const Edge& e) { return e.to == to->second; }))
      fail(NetworkErrorKind::InvalidMovement, "movement " + m.from + " -> " + m.to + " declared twice");
    edges.push_back({to->second, m.turning_ratio});
  }

  for (std::size_t i = 0; i < links.size(); ++i) {
    auto& edges = g.out_[i];
    if (!edges.empty()) {
      double sum = 0.0;
      for (const auto& e : edges) sum += e.ratio;
      if (std::abs(sum - 1.0) > kRatioTolerance) {
        std::ostringstream os;
        os.precision(12);
        os << "turning ratios out of link '" << links[i].id << "' sum to " << sum;
        fail(NetworkErrorKind::RatioSumViolation, os.str());
      }
      for (auto& e : edges) e.ratio /= sum;
    }
    const bool inferred_exit = edges.empty();
    if (links[i].is_exit && *links[i].is_exit != inferred_exit)
      fail(NetworkErrorKind::InconsistentExit,
           "link '" + links[i].id + "' is declared " + (inferred_exit ? "non-exit" : "exit") +
               " but has " + (inferred_exit ? "no" : "") + " outgoing movements");
    links[i].is_exit = inferred_exit;
  }
  g.links_ = std::move(links);
  return g;
}

// --- ExtendedGraph -----------------------------------------------------------

const Link& ExtendedGraph::link(LinkIndex i) const {
  if (i >= links_.size())
    fail(NetworkErrorKind::UnknownLink, "index " + std::to_string(i) + " is not a real link");
  return links_[i];
}

bool ExtendedGraph::is_exit(LinkIndex i) const {
  return i < links_.size() && out_.at(i).size() == 1 && out_[i][0].to == supersink();
}

std::vector<LinkIndex> ExtendedGraph::entry_links() const {
  std::vector<LinkIndex> out;
  for (LinkIndex i = 0; i < links_.size(); ++i)
    if (links_[i].is_entry) out.push_back(i);
  return out;
}

std::span<const Edge> ExtendedGraph::out_edges(LinkIndex i) const {
  if (i >= out_.size()) fail(NetworkErrorKind::UnknownLink, "index " + std::to_string(i));
  return out_[i];
}

std::span<const Edge> ExtendedGraph::in_edges(LinkIndex i) const {
  if (i >= in_.size()) fail(NetworkErrorKind::UnknownLink, "index " + std::to_string(i));
  return in_[i];
}

LinkIndex ExtendedGraph::index_of(const std::string& id) const { return lookup(symbols_, id); }

std::optional<LinkIndex> ExtendedGraph::find(const std::string& id) const {
  auto it = symbols_.find(id);
  if (it == symbols_.end()) return std::nullopt;
  return it->second;
}

ExtendedGraph extend_with_supersink(const LinkGraph& graph) {
  ExtendedGraph eg;
  const std::size_t n = graph.size();
  const LinkIndex omega = n;
  eg.links_ = graph.links();
  eg.out_.assign(n + 1, {});
  eg.in_.assign(n + 1, {});

  bool any_exit = false;
  for (LinkIndex i = 0; i < n; ++i) {
    if (graph.is_exit(i)) {
      any_exit = true;
      eg.out_[i].push_back({omega, 1.0});
    } else {
      for (const auto& e : graph.successors(i)) eg.out_[i].push_back(e);
    }
  }
  if (!any_exit) fail(NetworkErrorKind::NoExitLink, "no link reaches the supersink");
  eg.out_[omega].push_back({omega, 1.0});

  for (LinkIndex i = 0; i <= n; ++i)
    for (const auto& e : eg.out_[i]) eg.in_[e.to].push_back({i, e.ratio});

  // Every link must be able to reach the supersink, otherwise some probability
  // mass circulates forever and the chain is not absorbing.
  std::vector<bool> reaches(n + 1, false);
  std::deque<LinkIndex> frontier{omega};
  reaches[omega] = true;
  while (!frontier.empty()) {
    LinkIndex v = frontier.front();
    frontier.pop_front();
    for (const auto& e : eg.in_[v]) {
      if (!reaches[e.to]) {
        reaches[e.to] = true;
        frontier.push_back(e.to);
      }
    }
  }
  for (LinkIndex i = 0; i < n; ++i)
    if (!reaches[i])
      fail(NetworkErrorKind::NoExitLink, "link '" + eg.links_[i].id + "' cannot reach any exit");

  eg.names_.reserve(n + 1);
  for (const auto& l : eg.links_) eg.names_.push_back(l.id);
  eg.names_.emplace_back(kSupersinkName);
  for (LinkIndex i = 0; i <= n; ++i) eg.symbols_.emplace(eg.names_[i], i);
  return eg;
}

namespace {

std::vector<LinkIndex> walk_exact(const ExtendedGraph& graph, LinkIndex l, int h, bool upstream) {
  if (l >= graph.size()) fail(NetworkErrorKind::UnknownLink, "index " + std::to_string(l));
  if (h < 0) throw std::invalid_argument("hop count must be >= 0");
  std::vector<char> current(graph.size(), 0), next(graph.size(), 0);
  current[l] = 1;
  for (int step = 0; step < h; ++step) {
    std::fill(next.begin(), next.end(), 0);
    for (LinkIndex v = 0; v < graph.size(); ++v) {
      if (!current[v]) continue;
      for (const auto& e : upstream ? graph.in_edges(v) : graph.out_edges(v)) next[e.to] = 1;
    }
    std::swap(current, next);
  }
  std::vector<LinkIndex> out;
  for (LinkIndex v = 0; v < graph.size(); ++v)
    if (current[v]) out.push_back(v);
  return out;
}

}  // namespace

std::vector<LinkIndex> upstream_neighbors(const ExtendedGraph& graph, LinkIndex l, int h) {
  return walk_exact(graph, l, h, true);
}

std::vector<LinkIndex> downstream_neighbors(const ExtendedGraph& graph, LinkIndex l, int h) {
  return walk_exact(graph, l, h, false);
}

// --- TransitionMatrix --------------------------------------------------------

TransitionMatrix::TransitionMatrix(const ExtendedGraph& graph)
    : n_(graph.size()), dense_storage_(graph.size() <= kDenseLimit), names_(graph.index_order()) {
  std::vector<Eigen::Triplet<double>> triplets;
  for (LinkIndex i = 0; i < n_; ++i)
    for (const auto& e : graph.out_edges(i))
      triplets.emplace_back(static_cast<int>(i), static_cast<int>(e.to), e.ratio);
  const auto n = static_cast<Eigen::Index>(n_);
  sparse_.resize(n, n);
  sparse_.setFromTriplets(triplets.begin(), triplets.end());
  if (dense_storage_) dense_ = Eigen::MatrixXd(sparse_);
  validate();
}

TransitionMatrix TransitionMatrix::from_dense(const Eigen::MatrixXd& entries,
                                              std::vector<std::string> names) {
  if (entries.rows() != entries.cols() || entries.rows() == 0)
    fail(NetworkErrorKind::DimensionMismatch, "transition matrix must be square and nonempty");
  TransitionMatrix p;
  p.n_ = static_cast<std::size_t>(entries.rows());
  p.dense_storage_ = p.n_ <= kDenseLimit;
  p.sparse_ = entries.sparseView();
  if (p.dense_storage_) p.dense_ = entries;
  if (names.empty()) {
    for (std::size_t i = 0; i < p.n_; ++i) names.push_back(std::to_string(i));
  }
  if (names.size() != p.n_)
    fail(NetworkErrorKind::DimensionMismatch, "index_order length differs from matrix size");
  p.names_ = std::move(names);
  p.validate();
  return p;
}

void TransitionMatrix::validate() const {
  const Eigen::Index n = static_cast<Eigen::Index>(n_);
  Eigen::VectorXd sums = Eigen::VectorXd::Zero(n);
  for (Eigen::Index r = 0; r < sparse_.outerSize(); ++r)
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(sparse_, r); it; ++it) {
      if (it.value() < 0.0) fail(NetworkErrorKind::InvalidMovement, "negative transition entry");
      sums(r) += it.value();
    }
  for (Eigen::Index r = 0; r < n; ++r)
    if (std::abs(sums(r) - 1.0) > kRatioTolerance)
      fail(NetworkErrorKind::RatioSumViolation,
           "row " + std::to_string(r) + " sums to " + std::to_string(sums(r)));
  if (std::abs(entry(n_ - 1, n_ - 1) - 1.0) > kRatioTolerance)
    fail(NetworkErrorKind::NoExitLink, "last row must be the absorbing supersink");
}

double TransitionMatrix::entry(LinkIndex i, LinkIndex j) const {
  if (i >= n_ || j >= n_) fail(NetworkErrorKind::UnknownLink, "matrix index out of range");
  if (dense_storage_) return dense_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  return sparse_.coeff(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
}

Eigen::VectorXd TransitionMatrix::multiply(const Eigen::VectorXd& v) const {
  if (static_cast<std::size_t>(v.size()) != n_)
    fail(NetworkErrorKind::DimensionMismatch, "vector length " + std::to_string(v.size()) +
                                                  " vs matrix size " + std::to_string(n_));
  if (dense_storage_) return dense_ * v;
  return sparse_ * v;
}

Eigen::VectorXd TransitionMatrix::multiply_transposed(const Eigen::VectorXd& v) const {
  if (static_cast<std::size_t>(v.size()) != n_)
    fail(NetworkErrorKind::DimensionMismatch, "vector length " + std::to_string(v.size()) +
                                                  " vs matrix size " + std::to_string(n_));
  if (dense_storage_) return dense_.transpose() * v;
  return sparse_.transpose() * v;
}

Eigen::MatrixXd TransitionMatrix::dense() const {
  if (dense_storage_) return dense_;
  return Eigen::MatrixXd(sparse_);
}

Eigen::MatrixXd TransitionMatrix::power(int h) const {
  if (h < 0) throw std::invalid_argument("hop count must be >= 0");
  const auto n = static_cast<Eigen::Index>(n_);
  Eigen::MatrixXd result = Eigen::MatrixXd::Identity(n, n);
  for (int k = 0; k < h; ++k) {
    if (dense_storage_)
      result = result * dense_;
    else
      result = result * sparse_;
  }
  return result;
}

// --- MatrixPowers ------------------------------------------------------------

MatrixPowers::MatrixPowers(const TransitionMatrix& p, int max_hop)
    : n_(p.size()), count_(static_cast<std::size_t>(std::max(max_hop, 0)) + 1),
      dense_storage_(p.is_dense()) {
  if (max_hop < 0) throw std::invalid_argument("max_hop must be >= 0");
  const auto n = static_cast<Eigen::Index>(n_);
  if (dense_storage_) {
    const Eigen::MatrixXd base = p.dense();
    dense_.reserve(count_);
    dense_.push_back(Eigen::MatrixXd::Identity(n, n));
    for (std::size_t h = 1; h < count_; ++h) dense_.push_back(dense_.back() * base);
  } else {
    Eigen::SparseMatrix<double, Eigen::ColMajor> base = p.sparse();
    Eigen::SparseMatrix<double, Eigen::ColMajor> id(n, n);
    id.setIdentity();
    sparse_.reserve(count_);
    sparse_.push_back(id);
    for (std::size_t h = 1; h < count_; ++h) {
      Eigen::SparseMatrix<double, Eigen::ColMajor> next = sparse_.back() * base;
      sparse_.push_back(std::move(next));
    }
  }
}

void MatrixPowers::check_hop(int h) const {
  if (h < 0 || static_cast<std::size_t>(h) >= count_)
    throw std::out_of_range("hop " + std::to_string(h) + " outside cached range 0.." +
                            std::to_string(count_ - 1));
}

double MatrixPowers::entry(int h, LinkIndex j, LinkIndex l) const {
  check_hop(h);
  if (j >= n_ || l >= n_) fail(NetworkErrorKind::UnknownLink, "matrix index out of range");
  const auto r = static_cast<Eigen::Index>(j);
  const auto c = static_cast<Eigen::Index>(l);
  return dense_storage_ ? dense_[h](r, c) : sparse_[h].coeff(r, c);
}

Eigen::VectorXd MatrixPowers::column(int h, LinkIndex l) const {
  check_hop(h);
  if (l >= n_) fail(NetworkErrorKind::UnknownLink, "matrix index out of range");
  const auto c = static_cast<Eigen::Index>(l);
  if (dense_storage_) return dense_[h].col(c);
  return Eigen::VectorXd(sparse_[h].col(c));
}

// --- QueueSnapshot -----------------------------------------------------------

QueueSnapshot QueueSnapshot::from_vector(Eigen::VectorXd values) {
  if (values.size() == 0) fail(NetworkErrorKind::DimensionMismatch, "empty queue vector");
  for (Eigen::Index i = 0; i < values.size(); ++i)
    if (!std::isfinite(values(i)) || values(i) < 0.0)
      fail(NetworkErrorKind::InvalidQueue, "queue entry " + std::to_string(i) + " is negative or non-finite");
  if (values(values.size() - 1) != 0.0)
    fail(NetworkErrorKind::InvalidQueue, "supersink queue must be zero");
  return QueueSnapshot(std::move(values));
}

QueueSnapshot QueueSnapshot::from_counts(const ExtendedGraph& graph, std::span<const double> queues,
                                         QueueUnits units) {
  const std::size_t n_real = graph.real_link_count();
  if (queues.size() != n_real && queues.size() != graph.size())
    fail(NetworkErrorKind::DimensionMismatch,
         "expected " + std::to_string(n_real) + " or " + std::to_string(graph.size()) +
             " queue values, got " + std::to_string(queues.size()));
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(graph.size()));
  for (std::size_t i = 0; i < queues.size(); ++i) v(static_cast<Eigen::Index>(i)) = queues[i];
  if (units == QueueUnits::Density)
    for (std::size_t i = 0; i < n_real; ++i)
      v(static_cast<Eigen::Index>(i)) /= graph.link(i).length_m / 1000.0;
  return from_vector(std::move(v));
}

QueueSnapshot QueueSnapshot::zeros(std::size_t n) {
  return QueueSnapshot(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n)));
}

}  // namespace mhp::net
