// Copyright 2026 The AsynDBT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "asyndbt/lower_solver.hpp"
#include "asyndbt/oracle.hpp"
#include "asyndbt/planes.hpp"

namespace asyndbt {

struct UpperConfig {
  double eta_p = 1e-2;
  double eta_q = 1e-2;
  double eta_z = 1e-2;
  double eta_lambda = 1e-1;
  double c1 = 1e-2;
  double psi = 0.0;
  double lambda_max = 100.0;

  void validate() const;
  friend bool operator==(const UpperConfig&, const UpperConfig&) = default;
};

enum class GradientEstimator { kReinforce, kExact };

struct GradientConfig {
  GradientEstimator estimator = GradientEstimator::kReinforce;
  std::size_t samples = 8;
  bool baseline = true;
  double p_min = 1e-6;

  ReinforceOptions options() const { return {samples, baseline, p_min, false}; }
  void validate() const;
  friend bool operator==(const GradientConfig&, const GradientConfig&) = default;
};

struct WorkerState {
  std::size_t worker_id = 0;
  Policy policy;
  std::uint64_t last_sync = 0;  // iteration of the snapshot in hand
  Rng rng;
};

using PolyhedronSet = std::vector<Polyhedron>;

/// What a worker last received from the server.
struct ServerSnapshot {
  std::uint64_t iteration = 0;
  std::vector<ProbVector> z;
  std::shared_ptr<const PolyhedronSet> planes;
};

struct WorkerUpdateMsg {
  std::size_t worker_id = 0;
  std::uint64_t iteration = 0;
  std::vector<Vec> p;
  std::vector<Vec> q;  // logged only; the server never aggregates q
  double mean_loss = 0.0;
};

struct WorkerStepResult {
  WorkerState state;
  WorkerUpdateMsg msg;
};

/// p <- proj(p - eta_p (grad_p f + sum_l lambda_l a_l[v] + psi sign(p - z)))
/// q <- proj(q - eta_q grad_q f)
/// with grad f from the worker's own evaluator and the snapshot it holds.
/// Throws on evaluator failure; `w` is left untouched.
WorkerStepResult worker_step(const WorkerState& w, const ServerSnapshot& snapshot,
                             const UpperConfig& upper, const GradientConfig& grad,
                             Evaluator& evaluator, std::uint64_t iteration);

struct ServerState {
  std::vector<ProbVector> z;           // per slot
  PolyhedronSet polyhedra;             // per slot
  std::vector<std::vector<Vec>> last_p;  // per sender, per slot (sanitized)
  std::uint64_t iteration = 0;

  DualWindow window;
  std::uint64_t next_plane_id = 1;
  std::vector<LowerState> lower;       // inner-loop warm start, per slot
  std::vector<PhiEstimate> phi;        // per slot, empty before the first refresh

  static ServerState initial(const ProblemShape& shape, std::size_t senders,
                             double epsilon, const std::vector<WorkerState>& workers);
  ServerSnapshot snapshot() const;
  StackedPoint point(std::size_t slot) const;
};

/// Stores the received p (entry-clamped), then for each slot
/// z <- proj(z - eta_z (sum_l lambda_l b_l + psi sum_senders sign(z - p)))
/// followed by lambda <- clamp(lambda + eta_lambda (value(new z) - c1 lambda)).
/// Senders absent from `updates` contribute their last received p.
void server_step(ServerState& s, const std::vector<WorkerUpdateMsg>& updates,
                 const UpperConfig& upper);

/// Per-slot argmax with ties to the lowest index.
DiscreteAssignment decode_solution(const Policy& policy);

}  // namespace asyndbt
