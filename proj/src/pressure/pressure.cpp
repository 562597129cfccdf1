#include "mhp/pressure.hpp"

#include <set>
#include <stdexcept>

namespace mhp::pressure {

namespace {

using net::NetworkError;
using net::NetworkErrorKind;

void check_dims(const TransitionMatrix& p, const QueueSnapshot& q) {
  if (p.size() != q.size())
    throw NetworkError(NetworkErrorKind::DimensionMismatch,
                       "DimensionMismatch: matrix has " + std::to_string(p.size()) +
                           " vertices, queue vector " + std::to_string(q.size()));
}

void check_hop(int h) {
  if (h < 0) throw std::invalid_argument("hop count must be >= 0");
}

void check_link(std::size_t n, LinkIndex l) {
  if (l >= n)
    throw NetworkError(NetworkErrorKind::UnknownLink,
                       "UnknownLink: index " + std::to_string(l) + " outside 0.." + std::to_string(n - 1));
}

}  // namespace

void validate_phases(std::span<const Phase> phases, std::size_t index_size) {
  std::set<std::pair<std::string, LinkIndex>> seen;
  for (const auto& phase : phases) {
    if (phase.incoming_links.empty())
      throw std::invalid_argument("phase '" + phase.label + "' of intersection '" +
                                  phase.intersection + "' has no incoming links");
    for (auto l : phase.incoming_links) {
      check_link(index_size, l);
      if (!seen.emplace(phase.intersection, l).second)
        throw std::invalid_argument("link index " + std::to_string(l) +
                                    " appears in two phases of intersection '" +
                                    phase.intersection + "'");
    }
  }
}

PotentialVector upstream_potential(const TransitionMatrix& p, const QueueSnapshot& q, int h) {
  check_dims(p, q);
  check_hop(h);
  Eigen::VectorXd v = q.values();
  for (int k = 0; k < h; ++k) v = p.multiply_transposed(v);
  return {h, std::move(v)};
}

double link_importance(const TransitionMatrix& p, LinkIndex j, LinkIndex l, int h) {
  check_hop(h);
  check_link(p.size(), j);
  check_link(p.size(), l);
  // Propagate the unit mass released on j forward h steps: e_j^T P^h.
  Eigen::VectorXd mass = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p.size()));
  mass(static_cast<Eigen::Index>(j)) = 1.0;
  for (int k = 0; k < h; ++k) mass = p.multiply_transposed(mass);
  return mass(static_cast<Eigen::Index>(l));
}

std::vector<PressureVector> pressure_history(const TransitionMatrix& p, const QueueSnapshot& q, int h) {
  check_dims(p, q);
  check_hop(h);
  std::vector<PressureVector> out;
  out.reserve(static_cast<std::size_t>(h) + 1);
  const Eigen::VectorXd& queues = q.values();
  out.push_back({0, queues - p.multiply(queues)});
  Eigen::VectorXd potential = queues;
  for (int k = 1; k <= h; ++k) {
    potential = p.multiply_transposed(potential);
    out.push_back({k, out.back().values + potential});
  }
  return out;
}

PressureVector pressure_vector(const TransitionMatrix& p, const QueueSnapshot& q, int h) {
  return std::move(pressure_history(p, q, h).back());
}

PressureVector pressure_vector_unrolled(const TransitionMatrix& p, const QueueSnapshot& q, int h) {
  check_dims(p, q);
  check_hop(h);
  const Eigen::VectorXd& queues = q.values();
  Eigen::VectorXd total = -p.multiply(queues);
  for (int k = 0; k <= h; ++k) total += p.power(k).transpose() * queues;
  return {h, std::move(total)};
}

double link_pressure(const TransitionMatrix& p, const QueueSnapshot& q, LinkIndex l, int h) {
  check_dims(p, q);
  check_hop(h);
  check_link(p.size(), l);
  const MatrixPowers powers(p, h);
  const auto& queues = q.values();
  double upstream = 0.0;
  for (int k = 0; k <= h; ++k) upstream += powers.column(k, l).dot(queues);
  double downstream = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) downstream += p.entry(l, j) * q[j];
  return upstream - downstream;
}

double phase_pressure(const PressureVector& pressures, const Phase& phase) {
  double sum = 0.0;
  for (auto l : phase.incoming_links) {
    check_link(static_cast<std::size_t>(pressures.values.size()), l);
    sum += pressures.values(static_cast<Eigen::Index>(l));
  }
  return sum;
}

double potential_sum(const TransitionMatrix& p, const QueueSnapshot& q,
                     std::span<const LinkIndex> links, int max_hop, int first_hop) {
  check_dims(p, q);
  check_hop(max_hop);
  check_hop(first_hop);
  for (auto l : links) check_link(p.size(), l);
  double sum = 0.0;
  Eigen::VectorXd potential = q.values();
  for (int k = 0; k <= max_hop; ++k) {
    if (k > 0) potential = p.multiply_transposed(potential);
    if (k < first_hop) continue;
    for (auto l : links) sum += potential(static_cast<Eigen::Index>(l));
  }
  return sum;
}

// --- PressureEngine ----------------------------------------------------------

PressureEngine::PressureEngine(std::shared_ptr<const TransitionMatrix> p, int max_hop)
    : p_(std::move(p)), powers_(*p_, max_hop) {}

void PressureEngine::check(const QueueSnapshot& q, LinkIndex l, int h) const {
  check_dims(*p_, q);
  check_link(p_->size(), l);
  if (h < 0 || h > powers_.max_hop())
    throw std::out_of_range("hop " + std::to_string(h) + " exceeds engine max hop " +
                            std::to_string(powers_.max_hop()));
}

double PressureEngine::link_potential(const QueueSnapshot& q, LinkIndex l, int h) const {
  check(q, l, h);
  return powers_.column(h, l).dot(q.values());
}

double PressureEngine::link_pressure(const QueueSnapshot& q, LinkIndex l, int h) const {
  check(q, l, h);
  double upstream = 0.0;
  for (int k = 0; k <= h; ++k) upstream += powers_.column(k, l).dot(q.values());
  // Row l of P: immediate downstream potential.
  double downstream = 0.0;
  for (std::size_t j = 0; j < p_->size(); ++j) downstream += p_->entry(l, j) * q[j];
  return upstream - downstream;
}

double PressureEngine::phase_pressure(const QueueSnapshot& q, const Phase& phase, int h) const {
  double sum = 0.0;
  for (auto l : phase.incoming_links) sum += link_pressure(q, l, h);
  return sum;
}

double PressureEngine::potential_sum(const QueueSnapshot& q, std::span<const LinkIndex> links,
                                     int max_hop, int first_hop) const {
  double sum = 0.0;
  for (auto l : links)
    for (int k = first_hop; k <= max_hop; ++k) sum += link_potential(q, l, k);
  return sum;
}

}  // namespace mhp::pressure
