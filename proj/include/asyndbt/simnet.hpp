// Copyright 2026 The AsynDBT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "asyndbt/federated.hpp"
#include "asyndbt/lower_solver.hpp"
#include "asyndbt/oracle.hpp"
#include "asyndbt/planes.hpp"

namespace asyndbt {

using WorkerSet = std::vector<std::size_t>;  // ascending worker ids

enum class Scheduler { kAsync, kSync };
enum class PhiDemos { kSample, kMode };
enum class ByzantineKind { kSignFlip, kRandomSimplex, kFixedCorner, kStaleReplay };

std::string to_string(Scheduler s);
std::string to_string(PhiDemos d);
std::string to_string(ByzantineKind k);
Scheduler parse_scheduler(const std::string& s);
PhiDemos parse_phi_demos(const std::string& s);
ByzantineKind parse_byzantine(const std::string& s);

struct ByzantineMode {
  ByzantineKind kind = ByzantineKind::kSignFlip;
  std::size_t corner = 0;  // fixed_corner target index

  friend bool operator==(const ByzantineMode&, const ByzantineMode&) = default;
};

struct Reachability {
  enum class Kind { kBernoulli, kSchedule };
  Kind kind = Kind::kBernoulli;
  double availability = 0.8;
  std::map<std::size_t, double> per_worker;  // overrides of `availability`
  std::vector<WorkerSet> schedule;           // cycled when exhausted

  double availability_of(std::size_t worker) const;
  friend bool operator==(const Reachability&, const Reachability&) = default;
};

struct LatencyModel {
  enum class Kind { kConstant, kUniform, kExponential };
  Kind kind = Kind::kConstant;
  double value = 1.0;  // constant value, or the exponential mean
  double lo = 0.5;
  double hi = 1.5;

  double draw(Rng& rng) const;
  void validate() const;
  friend bool operator==(const LatencyModel&, const LatencyModel&) = default;
};

struct Latency {
  LatencyModel model;
  std::map<std::size_t, LatencyModel> per_worker;

  const LatencyModel& of(std::size_t worker) const;
  friend bool operator==(const Latency&, const Latency&) = default;
};

struct EarlyStop {
  bool enabled = true;
  double min_delta = 1e-4;
  std::size_t patience = 50;  // polyhedron periods

  friend bool operator==(const EarlyStop&, const EarlyStop&) = default;
};

struct SimConfig {
  std::size_t n_benign = 3;
  std::size_t n_byzantine = 0;
  std::size_t tau = 5;
  std::size_t delta = 10;
  double gamma = 1e-3;
  double epsilon = 0.05;
  std::size_t max_planes = 64;
  bool prune = true;
  Reachability reachability;
  Latency latency;
  std::vector<ByzantineMode> byzantine;  // per attacker; last entry repeats
  EarlyStop early_stop;
  std::size_t iterations = 500;
  std::uint64_t seed = 0;
  Scheduler scheduler = Scheduler::kAsync;
  PhiDemos phi_demos = PhiDemos::kSample;
  bool record_polyhedra = false;

  std::size_t senders() const { return n_benign + n_byzantine; }
  const ByzantineMode& mode_of(std::size_t attacker) const;
  void validate() const;
  friend bool operator==(const SimConfig&, const SimConfig&) = default;
};

/// Everything one run needs besides the simulator settings.
struct Problem {
  ProblemShape shape;
  /// One evaluator per benign worker; attackers use evaluator 0 for their
  /// shadow computation.
  std::vector<std::shared_ptr<Evaluator>> evaluators;
  UpperConfig upper;
  InnerConfig inner;
  GradientConfig gradient;
};

/// Per-round scheduler bookkeeping.
struct ClockState {
  double clock = 0.0;
  std::vector<double> ready_at;          // when each worker's next message is ready
  std::vector<std::int64_t> last;        // last participating iteration, -1 if none

  std::size_t staleness(std::size_t worker, std::uint64_t k) const {
    return static_cast<std::size_t>(static_cast<std::int64_t>(k) - last[worker]);
  }
};

/// A^k: available-and-ready workers plus every worker at staleness >= tau.
/// Never empty; the most stale worker (lowest id on ties) fills an empty
/// set. `available` holds this round's availability draw per worker.
WorkerSet form_reachable_set(const SimConfig& cfg, std::uint64_t k, const ClockState& clock,
                             const std::vector<bool>& available, double round_start);

/// Start of round k: the later of the previous round end and the earliest
/// ready message.
double round_start(const ClockState& clock);

/// End of a round that included `set`: the latest ready time among them.
double advance_clock(const ClockState& clock, const WorkerSet& set, double start);

/// Consumer of trace records; each call receives one JSON object.
using TraceSink = std::function<void(const nlohmann::json&)>;

struct SimResult {
  std::vector<Policy> workers;  // benign
  std::vector<ProbVector> z;
  std::vector<Polyhedron> polyhedra;
  std::vector<std::vector<Polyhedron>> polyhedra_history;  // per checkpoint
  std::vector<StackedPoint> last_points;                   // per slot
  std::vector<PhiEstimate> phi;
  std::size_t iterations_run = 0;
  double clock = 0.0;
  double final_loss = 0.0;
  std::string loss_kind;
  bool early_stopped = false;
  std::size_t skipped_steps = 0;
  std::size_t successful_steps = 0;  // benign local steps that completed
  std::size_t max_staleness = 0;
  nlohmann::json summary;
};

/// Runs the asynchronous bilevel loop. Records are passed to `sink` in
/// order: one "iter" record per outer iteration and "plane" records for
/// every plane added or removed.
SimResult run(const SimConfig& cfg, const Problem& problem, const TraceSink& sink = {});

/// Centralized reference: one policy trained on the pooled evaluators with
/// the same upper-level steps and no consensus variables or planes.
SimResult run_centralized(const SimConfig& cfg, const Problem& problem,
                          const TraceSink& sink = {});

/// Mean over benign workers of their own expected loss, exact when a closed
/// form or enumeration is available. Returns nullopt otherwise.
std::optional<double> exact_global_loss(const std::vector<Policy>& workers,
                                        const std::vector<std::shared_ptr<Evaluator>>& evs);

}  // namespace asyndbt
