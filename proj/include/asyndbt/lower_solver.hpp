// Copyright 2026 The AsynDBT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "asyndbt/oracle.hpp"
#include "asyndbt/simplex.hpp"

namespace asyndbt {

using DemoChoice = std::vector<std::uint32_t>;

struct InnerConfig {
  std::size_t K = 20;
  double mu = 1.0;
  double psi = 0.0;
  double eta_p = 0.05;
  double eta_z = 0.05;
  double eta_rho = 0.1;

  void validate() const;
  friend bool operator==(const InnerConfig&, const InnerConfig&) = default;
};

/// One slot's blocks: every worker's p, the consensus z, and a point in the
/// (p, z) space. Byzantine blocks may hold arbitrary finite vectors, so raw
/// vectors are used rather than ProbVector.
struct StackedPoint {
  std::vector<Vec> p;
  Vec z;

  friend bool operator==(const StackedPoint&, const StackedPoint&) = default;
};

/// Inner-loop state for one slot. p and rho belong to the workers in the
/// Lagrangian; `received` holds the latest vectors of the remaining senders
/// (entry-clamped, not projected). Sign terms run over both.
struct LowerState {
  std::vector<ProbVector> p;
  std::vector<Vec> received;
  ProbVector z;
  std::vector<Vec> rho;

  std::size_t n_benign() const { return p.size(); }
  std::size_t n_senders() const { return p.size() + received.size(); }
  StackedPoint stacked() const;
};

/// Entry-clamp to [0, 1]; NaN becomes 0.
Vec sanitize_message(Vec x);

/// Consensus estimate of the lower-level solution for one slot, valid for the
/// per-worker demo realizations it was computed with.
struct PhiEstimate {
  StackedPoint stacked;
  std::vector<DemoChoice> demos_used;
  std::size_t step_count = 0;
};

struct LagrangianGradients {
  Vec d_p;    // for the requested worker
  Vec d_z;    // summed over all participating workers
  Vec d_rho;  // for the requested worker
};

/// Gradients of G = sum_v g_v(p_v) + rho_v'(p_v - z) + mu/2 |p_v - z|^2
/// with g_grad = grad g_v(p_v) supplied by the caller.
LagrangianGradients grad_gp(const LowerState& state, std::size_t worker,
                            const Vec& g_grad, double mu);

/// G for one slot given the g_v values of the participating workers.
double lagrangian_value(const LowerState& state, const Vec& g_values, double mu);

/// p_v <- proj(p_v - eta_p (grad_p G + psi sign(p_v - z))). The robust term
/// pulls p_v toward z.
ProbVector inner_worker_step(const LowerState& state, std::size_t worker,
                             const Vec& g_grad, const InnerConfig& cfg);

/// z <- proj(z - eta_z (grad_z G + psi sum_all sign(z - p))), then
/// rho_v <- rho_v + eta_rho (p_v - z_new). `state.p` must already hold this
/// round's received vectors for all senders.
void inner_server_step(LowerState& state, const InnerConfig& cfg);

/// Supplies grad g_v for every token slot of worker v with demos fixed.
class LowerGradSource {
 public:
  virtual ~LowerGradSource() = default;
  virtual std::vector<Vec> grad(std::size_t worker, const DemoChoice& demos,
                                const std::vector<ProbVector>& p) = 0;
  /// g_v itself, when available (used for Lagrangian traces).
  virtual std::optional<double> value(std::size_t, const DemoChoice&,
                                      const std::vector<ProbVector>&) {
    return std::nullopt;
  }
};

/// What the non-participating senders transmit each inner round.
class InnerAdversary {
 public:
  virtual ~InnerAdversary() = default;
  /// Vectors per slot for sender `index` (0-based among adversaries).
  virtual std::vector<Vec> send(std::size_t index,
                                const std::vector<const ProbVector*>& z) = 0;
};

/// g_v from an evaluator, with demos pinned to the worker's realization.
class EvaluatorGradSource final : public LowerGradSource {
 public:
  /// `rngs` null selects exact enumeration; otherwise one stream per worker.
  /// `track_values` off makes value() report nothing, which skips the
  /// Lagrangian trace.
  EvaluatorGradSource(std::vector<Evaluator*> evaluators,
                      ReinforceOptions opts, std::vector<Rng>* rngs,
                      bool track_values = true);

  std::vector<Vec> grad(std::size_t worker, const DemoChoice& demos,
                        const std::vector<ProbVector>& p) override;
  std::optional<double> value(std::size_t worker, const DemoChoice& demos,
                              const std::vector<ProbVector>& p) override;

 private:
  Policy pinned(std::size_t worker, const DemoChoice& demos,
                const std::vector<ProbVector>& p) const;

  std::vector<Evaluator*> evaluators_;
  ReinforceOptions opts_;
  std::vector<Rng>* rngs_;
  bool track_values_;
};

struct PhiResult {
  std::vector<PhiEstimate> phi;    // per slot
  std::vector<LowerState> state;   // per slot, for warm starts
  /// Sum over slots of G after each round, when the source reports values.
  std::vector<double> lagrangian_trace;
};

/// K bulk-synchronous rounds of inner_worker_step for every participating
/// worker (all slots share one gradient call), adversary sends, then
/// inner_server_step per slot. `demos[v]` is worker v's realization.
PhiResult estimate_phi(const std::vector<DemoChoice>& demos,
                       std::vector<LowerState> init, const InnerConfig& cfg,
                       LowerGradSource& source, InnerAdversary* adversary = nullptr);

/// L1 distance of `point` to phi.stacked; `demos` must equal phi.demos_used.
double h_value(const std::vector<DemoChoice>& demos, const StackedPoint& point,
               const PhiEstimate& phi);

}  // namespace asyndbt
