// Copyright 2026 The AsynDBT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "asyndbt/lower_solver.hpp"
#include "asyndbt/rng.hpp"

namespace asyndbt {

inline constexpr double kFeasibilityTol = 1e-12;

/// sum_v a[v]' p_v + b' z + c <= 0. Planes created in the same refresh share
/// an id across slots; their duals are summed when deciding on removal.
struct CuttingPlane {
  std::uint64_t id = 0;
  std::size_t slot = 0;
  std::vector<Vec> a;
  Vec b;
  double c = 0.0;
  double dual = 0.0;
  std::uint64_t created_at = 0;

  friend bool operator==(const CuttingPlane&, const CuttingPlane&) = default;
};

struct Polyhedron {
  std::size_t slot = 0;
  std::vector<CuttingPlane> planes;
  double epsilon = 0.05;

  void validate() const;
  friend bool operator==(const Polyhedron&, const Polyhedron&) = default;
};

double plane_value(const CuttingPlane& plane, const StackedPoint& point);

/// Linearizes h(x) - eps at a violating point, where h is the L1 distance
/// to phi: a and b are sign subgradients at `point` and
/// c = h(point) - g'point - eps. The plane is positive at `point` and
/// non-positive wherever h <= eps. Throws when h(point) <= eps.
CuttingPlane generate_plane(const PhiEstimate& phi, const StackedPoint& point,
                            double epsilon, std::uint64_t id, std::size_t slot,
                            std::uint64_t created_at);

/// Every plane value <= kFeasibilityTol.
bool is_feasible(const Polyhedron& poly, const StackedPoint& point);

/// Duals summed over slots per plane id, sampled at refresh checkpoints.
class DualWindow {
 public:
  /// Appends the current summed dual of every id present in `polys`.
  void record(const std::vector<Polyhedron>& polys);
  /// Appends the current summed dual for `ids` only (newly created planes).
  void record(const std::vector<Polyhedron>& polys,
              const std::vector<std::uint64_t>& ids);
  /// The two most recent samples (older first), if two exist.
  std::optional<std::pair<double, double>> last_two(std::uint64_t id) const;
  void forget(std::uint64_t id) { samples_.erase(id); }

  /// Summed duals per id right now.
  static std::map<std::uint64_t, double> summed_duals(const std::vector<Polyhedron>& polys);

 private:
  std::map<std::uint64_t, std::vector<double>> samples_;
};

/// Removes every id whose summed dual was below gamma at both of its two most
/// recent samples. Returns the removed ids in ascending order.
std::vector<std::uint64_t> prune(std::vector<Polyhedron>& polys, double gamma,
                                 DualWindow& window);

/// Drops lowest-dual planes (oldest first on ties) until at most `cap`
/// remain. Returns the removed ids.
std::vector<std::uint64_t> enforce_plane_cap(Polyhedron& poly, std::size_t cap);

struct NestednessReport {
  std::size_t samples = 0;
  std::size_t violations = 0;  // feasible at checkpoint n+1 but not at n
  std::vector<std::size_t> feasible_per_checkpoint;
};

/// Samples points and checks that the feasible sets of consecutive
/// checkpoints only shrink. Points mix flat-Dirichlet blocks with
/// perturbations of `anchor` when one is given. `blocks` and `dim` describe
/// the point layout.
NestednessReport audit_nestedness(const std::vector<Polyhedron>& history,
                                  std::size_t sample_count, std::size_t blocks,
                                  std::size_t dim, Rng& rng,
                                  const StackedPoint* anchor = nullptr);

}  // namespace asyndbt
