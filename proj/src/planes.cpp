// Copyright 2026 The AsynDBT Authors
// SPDX-License-Identifier: Apache-2.0

#include "asyndbt/planes.hpp"

#include <algorithm>
#include <string>

#include "asyndbt/error.hpp"

namespace asyndbt {

namespace {

double dot(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) s += x[j] * y[j];
  return s;
}

Vec to_vec(const SignVector& s) {
  Vec out(s.size());
  for (std::size_t j = 0; j < s.size(); ++j) out[j] = s[j];
  return out;
}

Vec difference(const Vec& x, const Vec& y) {
  require(x.size() == y.size(), ErrorCode::kInvalidArgument, "dimension mismatch");
  Vec d(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) d[j] = x[j] - y[j];
  return d;
}

}  // namespace

void Polyhedron::validate() const {
  require(epsilon > 0.0, ErrorCode::kInvalidArgument, "epsilon must be > 0");
  for (const auto& pl : planes)
    require(pl.slot == slot && pl.dual >= 0.0, ErrorCode::kInvariant,
            "plane slot or dual invalid");
}

double plane_value(const CuttingPlane& plane, const StackedPoint& point) {
  require(point.p.size() == plane.a.size() && point.z.size() == plane.b.size(),
          ErrorCode::kInvalidArgument, "plane_value: dimension mismatch");
  double v = plane.c + dot(plane.b, point.z);
  for (std::size_t w = 0; w < plane.a.size(); ++w) {
    require(point.p[w].size() == plane.a[w].size(), ErrorCode::kInvalidArgument,
            "plane_value: block dimension mismatch");
    v += dot(plane.a[w], point.p[w]);
  }
  return v;
}

CuttingPlane generate_plane(const PhiEstimate& phi, const StackedPoint& point,
                            double epsilon, std::uint64_t id, std::size_t slot,
                            std::uint64_t created_at) {
  require(epsilon > 0.0, ErrorCode::kInvalidArgument, "epsilon must be > 0");
  const double h = h_value(phi.demos_used, point, phi);
  require(h > epsilon, ErrorCode::kInvalidArgument,
          "generate_plane: point is feasible (h = " + std::to_string(h) + ")");

  CuttingPlane pl;
  pl.id = id;
  pl.slot = slot;
  pl.created_at = created_at;
  double g_dot_point = 0.0;
  for (std::size_t w = 0; w < point.p.size(); ++w) {
    pl.a.push_back(to_vec(sign_subgradient(difference(point.p[w], phi.stacked.p[w]))));
    g_dot_point += dot(pl.a.back(), point.p[w]);
  }
  pl.b = to_vec(sign_subgradient(difference(point.z, phi.stacked.z)));
  g_dot_point += dot(pl.b, point.z);
  pl.c = h - g_dot_point - epsilon;
  return pl;
}

bool is_feasible(const Polyhedron& poly, const StackedPoint& point) {
  return std::all_of(poly.planes.begin(), poly.planes.end(), [&](const CuttingPlane& pl) {
    return plane_value(pl, point) <= kFeasibilityTol;
  });
}

// ---------------------------------------------------------------------------

std::map<std::uint64_t, double> DualWindow::summed_duals(const std::vector<Polyhedron>& polys) {
  std::map<std::uint64_t, double> sums;
  for (const auto& poly : polys)
    for (const auto& pl : poly.planes) sums[pl.id] += pl.dual;
  return sums;
}

void DualWindow::record(const std::vector<Polyhedron>& polys) {
  for (const auto& [id, sum] : summed_duals(polys)) {
    auto& s = samples_[id];
    s.push_back(sum);
    if (s.size() > 2) s.erase(s.begin());
  }
}

void DualWindow::record(const std::vector<Polyhedron>& polys,
                        const std::vector<std::uint64_t>& ids) {
  const auto sums = summed_duals(polys);
  for (auto id : ids) {
    const auto it = sums.find(id);
    if (it == sums.end()) continue;
    auto& s = samples_[id];
    s.push_back(it->second);
    if (s.size() > 2) s.erase(s.begin());
  }
}

std::optional<std::pair<double, double>> DualWindow::last_two(std::uint64_t id) const {
  const auto it = samples_.find(id);
  if (it == samples_.end() || it->second.size() < 2) return std::nullopt;
  return std::make_pair(it->second[0], it->second[1]);
}

std::vector<std::uint64_t> prune(std::vector<Polyhedron>& polys, double gamma,
                                 DualWindow& window) {
  require(gamma > 0.0, ErrorCode::kInvalidArgument, "gamma must be > 0");
  std::vector<std::uint64_t> removed;
  for (const auto& [id, sum] : DualWindow::summed_duals(polys)) {
    (void)sum;
    const auto w = window.last_two(id);
    if (w && w->first < gamma && w->second < gamma) removed.push_back(id);
  }
  for (auto& poly : polys)
    std::erase_if(poly.planes, [&](const CuttingPlane& pl) {
      return std::binary_search(removed.begin(), removed.end(), pl.id);
    });
  for (auto id : removed) window.forget(id);
  return removed;
}

std::vector<std::uint64_t> enforce_plane_cap(Polyhedron& poly, std::size_t cap) {
  std::vector<std::uint64_t> removed;
  while (poly.planes.size() > cap) {
    auto victim = std::min_element(poly.planes.begin(), poly.planes.end(),
                                   [](const CuttingPlane& x, const CuttingPlane& y) {
                                     if (x.dual != y.dual) return x.dual < y.dual;
                                     return x.id < y.id;
                                   });
    removed.push_back(victim->id);
    poly.planes.erase(victim);
  }
  return removed;
}

NestednessReport audit_nestedness(const std::vector<Polyhedron>& history,
                                  std::size_t sample_count, std::size_t blocks,
                                  std::size_t dim, Rng& rng, const StackedPoint* anchor) {
  NestednessReport report;
  report.samples = sample_count;
  report.feasible_per_checkpoint.assign(history.size(), 0);
  if (history.empty()) return report;

  auto random_block = [&]() { return ProbVector::random(dim, rng).vec(); };
  std::vector<bool> feasible(history.size());
  for (std::size_t s = 0; s < sample_count; ++s) {
    StackedPoint x;
    for (std::size_t w = 0; w < blocks; ++w) x.p.push_back(random_block());
    x.z = random_block();
    if (anchor && (s % 2 == 1)) {
      // Small convex perturbation of the anchor keeps the sample near the
      // region the planes actually carve.
      const double t = rng.uniform(0.0, 0.5);
      for (std::size_t w = 0; w < blocks; ++w)
        for (std::size_t j = 0; j < dim; ++j)
          x.p[w][j] = (1.0 - t) * anchor->p[w][j] + t * x.p[w][j];
      for (std::size_t j = 0; j < dim; ++j) x.z[j] = (1.0 - t) * anchor->z[j] + t * x.z[j];
    }
    for (std::size_t n = 0; n < history.size(); ++n) {
      feasible[n] = is_feasible(history[n], x);
      if (feasible[n]) ++report.feasible_per_checkpoint[n];
    }
    for (std::size_t n = 0; n + 1 < history.size(); ++n)
      if (feasible[n + 1] && !feasible[n]) ++report.violations;
  }
  return report;
}

}  // namespace asyndbt
