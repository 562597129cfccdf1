#pragma once

// Multi-hop upstream potentials and pressures.
//
//   potential(h)  = (P^h)^T Q
//   pressure(0)   = Q - P Q
//   pressure(h)   = pressure(h-1) + potential(h)
//
// All vectors are indexed by the extended graph's index_order.

#include "mhp/network.hpp"

#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mhp::pressure {

using net::LinkIndex;
using net::MatrixPowers;
using net::QueueSnapshot;
using net::TransitionMatrix;

struct PotentialVector {
  int hop = 0;
  Eigen::VectorXd values;
};

struct PressureVector {
  int hop = 0;
  Eigen::VectorXd values;
};

struct Phase {
  std::string intersection;
  std::string label;
  std::vector<LinkIndex> incoming_links;
  double min_green_s = 10.0;
};

/// Throws std::invalid_argument when a phase is empty or when two phases of
/// one intersection share an incoming link.
void validate_phases(std::span<const Phase> phases, std::size_t index_size);

PotentialVector upstream_potential(const TransitionMatrix& p, const QueueSnapshot& q, int h);

/// (P^h)_{jl}: probability that a vehicle released on j is on l after h moves.
double link_importance(const TransitionMatrix& p, LinkIndex j, LinkIndex l, int h);

/// Recursive evaluation.
PressureVector pressure_vector(const TransitionMatrix& p, const QueueSnapshot& q, int h);

/// pressure(0) .. pressure(h) from the recursive evaluation; element k has hop k.
std::vector<PressureVector> pressure_history(const TransitionMatrix& p, const QueueSnapshot& q, int h);

/// Unrolled evaluation: sum_{h'=0..h} (P^{h'})^T Q - P Q, with each power
/// formed explicitly. Kept separate from the recursive path for cross-checks.
PressureVector pressure_vector_unrolled(const TransitionMatrix& p, const QueueSnapshot& q, int h);

double link_pressure(const TransitionMatrix& p, const QueueSnapshot& q, LinkIndex l, int h);

double phase_pressure(const PressureVector& pressures, const Phase& phase);

/// sum over links and hops first_hop..max_hop of potential(l, h').
double potential_sum(const TransitionMatrix& p, const QueueSnapshot& q,
                     std::span<const LinkIndex> links, int max_hop, int first_hop = 0);

/// Cached-power evaluator for controller hot paths.
///
/// Holds P^0..P^max_hop; per-link quantities use column extraction instead of
/// full vector recomputation. Immutable and shareable across threads.
class PressureEngine {
 public:
  PressureEngine(std::shared_ptr<const TransitionMatrix> p, int max_hop);

  int max_hop() const noexcept { return powers_.max_hop(); }
  const TransitionMatrix& matrix() const noexcept { return *p_; }

  double link_potential(const QueueSnapshot& q, LinkIndex l, int h) const;
  double link_pressure(const QueueSnapshot& q, LinkIndex l, int h) const;
  double phase_pressure(const QueueSnapshot& q, const Phase& phase, int h) const;
  double potential_sum(const QueueSnapshot& q, std::span<const LinkIndex> links, int max_hop,
                       int first_hop = 0) const;

 private:
  void check(const QueueSnapshot& q, LinkIndex l, int h) const;

  std::shared_ptr<const TransitionMatrix> p_;
  MatrixPowers powers_;
};

}  // namespace mhp::pressure
