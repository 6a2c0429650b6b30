// Copyright 2026 The AsynDBT Authors
// SPDX-License-Identifier: Apache-2.0

#include "asyndbt/simnet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "asyndbt/error.hpp"

namespace asyndbt {

using nlohmann::json;

std::string to_string(Scheduler s) { return s == Scheduler::kAsync ? "async" : "sync"; }
std::string to_string(PhiDemos d) { return d == PhiDemos::kSample ? "sample" : "mode"; }

std::string to_string(ByzantineKind k) {
  switch (k) {
    case ByzantineKind::kSignFlip: return "sign_flip";
    case ByzantineKind::kRandomSimplex: return "random_simplex";
    case ByzantineKind::kFixedCorner: return "fixed_corner";
    case ByzantineKind::kStaleReplay: return "stale_replay";
  }
  return "?";
}

Scheduler parse_scheduler(const std::string& s) {
  if (s == "async") return Scheduler::kAsync;
  if (s == "sync") return Scheduler::kSync;
  fail(ErrorCode::kConfig, "unknown scheduler '" + s + "'");
}

PhiDemos parse_phi_demos(const std::string& s) {
  if (s == "sample") return PhiDemos::kSample;
  if (s == "mode") return PhiDemos::kMode;
  fail(ErrorCode::kConfig, "unknown phi_demos '" + s + "'");
}

ByzantineKind parse_byzantine(const std::string& s) {
  for (auto k : {ByzantineKind::kSignFlip, ByzantineKind::kRandomSimplex,
                 ByzantineKind::kFixedCorner, ByzantineKind::kStaleReplay})
    if (to_string(k) == s) return k;
  fail(ErrorCode::kConfig, "unknown byzantine mode '" + s + "'");
}

double Reachability::availability_of(std::size_t worker) const {
  const auto it = per_worker.find(worker);
  return it == per_worker.end() ? availability : it->second;
}

double LatencyModel::draw(Rng& rng) const {
  switch (kind) {
    case Kind::kConstant: return value;
    case Kind::kUniform: return rng.uniform(lo, hi);
    case Kind::kExponential: return value * rng.exponential();
  }
  return value;
}

void LatencyModel::validate() const {
  switch (kind) {
    case Kind::kConstant:
    case Kind::kExponential:
      require(std::isfinite(value) && value > 0.0, ErrorCode::kConfig,
              "latency value must be > 0");
      break;
    case Kind::kUniform:
      require(std::isfinite(lo) && std::isfinite(hi) && lo > 0.0 && lo <= hi,
              ErrorCode::kConfig, "uniform latency needs 0 < lo <= hi");
      break;
  }
}

const LatencyModel& Latency::of(std::size_t worker) const {
  const auto it = per_worker.find(worker);
  return it == per_worker.end() ? model : it->second;
}

const ByzantineMode& SimConfig::mode_of(std::size_t attacker) const {
  static const ByzantineMode kDefault{};
  if (byzantine.empty()) return kDefault;
  return byzantine[std::min(attacker, byzantine.size() - 1)];
}

void SimConfig::validate() const {
  require(n_benign >= 1, ErrorCode::kConfig, "n_benign must be >= 1");
  require(tau >= 1, ErrorCode::kConfig, "tau must be >= 1");
  require(delta >= 1, ErrorCode::kConfig, "delta must be >= 1");
  require(gamma > 0.0, ErrorCode::kConfig, "gamma must be > 0");
  require(epsilon > 0.0, ErrorCode::kConfig, "epsilon must be > 0");
  require(max_planes >= 1, ErrorCode::kConfig, "max_planes must be >= 1");
  const auto check_p = [](double p) {
    require(p >= 0.0 && p <= 1.0, ErrorCode::kConfig, "availability must be in [0, 1]");
  };
  check_p(reachability.availability);
  for (const auto& [w, p] : reachability.per_worker) {
    require(w < senders(), ErrorCode::kConfig, "availability override for unknown worker");
    check_p(p);
  }
  if (reachability.kind == Reachability::Kind::kSchedule) {
    require(!reachability.schedule.empty(), ErrorCode::kConfig, "empty reachability schedule");
    for (const auto& set : reachability.schedule)
      for (auto w : set)
        require(w < senders(), ErrorCode::kConfig, "schedule names an unknown worker");
  }
  latency.model.validate();
  for (const auto& [w, m] : latency.per_worker) {
    require(w < senders(), ErrorCode::kConfig, "latency override for unknown worker");
    m.validate();
  }
  require(early_stop.min_delta >= 0.0 && early_stop.patience >= 1, ErrorCode::kConfig,
          "early_stop needs min_delta >= 0 and patience >= 1");
}

// ---------------------------------------------------------------------------
// Scheduling

double round_start(const ClockState& clock) {
  double earliest = std::numeric_limits<double>::infinity();
  for (double r : clock.ready_at) earliest = std::min(earliest, r);
  return std::max(clock.clock, earliest);
}

WorkerSet form_reachable_set(const SimConfig& cfg, std::uint64_t k, const ClockState& clock,
                             const std::vector<bool>& available, double start) {
  const std::size_t R = cfg.senders();
  // A schedule names who syncs; the round then waits for them.
  const bool scheduled = cfg.reachability.kind == Reachability::Kind::kSchedule;
  WorkerSet set;
  for (std::size_t v = 0; v < R; ++v) {
    const bool reachable = available[v] && (scheduled || clock.ready_at[v] <= start);
    if (reachable || clock.staleness(v, k) >= cfg.tau) set.push_back(v);
  }
  if (set.empty()) {
    std::size_t pick = 0;
    for (std::size_t v = 1; v < R; ++v)
      if (clock.staleness(v, k) > clock.staleness(pick, k)) pick = v;
    set.push_back(pick);
  }
  return set;
}

double advance_clock(const ClockState& clock, const WorkerSet& set, double start) {
  double end = std::max(start, clock.clock);
  for (auto v : set) end = std::max(end, clock.ready_at[v]);
  return end;
}

// ---------------------------------------------------------------------------

std::optional<double> exact_global_loss(const std::vector<Policy>& workers,
                                        const std::vector<std::shared_ptr<Evaluator>>& evs) {
  double total = 0.0;
  for (std::size_t v = 0; v < workers.size(); ++v) {
    auto& ev = *evs[v];
    if (auto e = ev.expected_loss(workers[v])) {
      total += *e;
    } else if (ev.is_pure() && ev.shape().enumerable()) {
      total += exact_expected_loss(workers[v], ev);
    } else {
      return std::nullopt;
    }
  }
  return total / static_cast<double>(workers.size());
}

namespace {

enum StreamKind : std::uint64_t { kUpdate = 0, kInner = 1, kAvail = 2, kLatency = 3 };

Rng stream_for(std::uint64_t seed, std::size_t worker, StreamKind kind) {
  return Rng::stream(seed, 4 * static_cast<std::uint64_t>(worker) + kind);
}

json plane_record(const char* event, std::uint64_t k, const CuttingPlane& pl) {
  json r{{"type", "plane"}, {"event", event}, {"k", k}, {"id", pl.id}, {"slot", pl.slot}};
  if (std::string(event) == "add") {
    r["a"] = pl.a;
    r["b"] = pl.b;
    r["c"] = pl.c;
    r["created_at"] = pl.created_at;
  }
  r["dual"] = pl.dual;
  return r;
}

/// Optimum per benign worker, when one can be found.
std::vector<std::optional<DiscreteAssignment>> optima(
    const std::vector<std::shared_ptr<Evaluator>>& evs) {
  std::vector<std::optional<DiscreteAssignment>> out;
  for (const auto& ev : evs) {
    if (auto o = ev->known_optimum()) {
      out.push_back(*o);
    } else if (ev->is_pure() && ev->shape().enumerable()) {
      out.push_back(enumerate_optimum(*ev).assignment);
    } else {
      out.push_back(std::nullopt);
    }
  }
  return out;
}

/// Mean fraction of decoded coordinates that match each worker's optimum.
std::optional<double> decode_accuracy(const std::vector<Policy>& workers,
                                      const std::vector<std::optional<DiscreteAssignment>>& opt) {
  double total = 0.0;
  for (std::size_t v = 0; v < workers.size(); ++v) {
    if (!opt[v]) return std::nullopt;
    const auto a = decode_solution(workers[v]);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < a.tokens.size(); ++i) hits += a.tokens[i] == opt[v]->tokens[i];
    for (std::size_t u = 0; u < a.demos.size(); ++u) hits += a.demos[u] == opt[v]->demos[u];
    total += static_cast<double>(hits) / static_cast<double>(a.tokens.size() + a.demos.size());
  }
  return total / static_cast<double>(workers.size());
}

json assignment_json(const DiscreteAssignment& a) {
  return {{"tokens", a.tokens}, {"demos", a.demos}};
}

/// Plateau detection on the loss sampled once per polyhedron period.
class Plateau {
 public:
  explicit Plateau(const EarlyStop& cfg) : cfg_(cfg) {}
  bool update(double loss) {
    if (!cfg_.enabled) return false;
    if (loss < best_ - cfg_.min_delta) {
      best_ = loss;
      idle_ = 0;
      return false;
    }
    return ++idle_ >= cfg_.patience;
  }

 private:
  EarlyStop cfg_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t idle_ = 0;
};

struct Attacker {
  ByzantineMode mode;
  WorkerState shadow;  // honest computation the attacker distorts
  Rng rng;
  std::optional<std::vector<Vec>> first;  // first message, for stale_replay
};

std::vector<Vec> attack(Attacker& at, const std::vector<const ProbVector*>& z) {
  std::vector<Vec> out;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const std::size_t n = z[i]->size();
    switch (at.mode.kind) {
      case ByzantineKind::kSignFlip: {
        Vec v(n);
        for (std::size_t j = 0; j < n; ++j) v[j] = 2.0 * (*z[i])[j] - at.shadow.policy.p[i][j];
        out.push_back(std::move(v));
        break;
      }
      case ByzantineKind::kRandomSimplex:
        out.push_back(ProbVector::random(n, at.rng).vec());
        break;
      case ByzantineKind::kFixedCorner:
        out.push_back(ProbVector::one_hot(n, std::min(at.mode.corner, n - 1)).vec());
        break;
      case ByzantineKind::kStaleReplay:
        out.push_back(at.first ? (*at.first)[i] : at.shadow.policy.p[i].vec());
        break;
    }
  }
  return out;
}

class AttackerAdversary final : public InnerAdversary {
 public:
  explicit AttackerAdversary(std::vector<Attacker>& attackers) : attackers_(attackers) {}
  std::vector<Vec> send(std::size_t index, const std::vector<const ProbVector*>& z) override {
    return attack(attackers_.at(index), z);
  }

 private:
  std::vector<Attacker>& attackers_;
};

}  // namespace

// ---------------------------------------------------------------------------

SimResult run(const SimConfig& cfg, const Problem& problem, const TraceSink& sink) {
  cfg.validate();
  problem.shape.validate();
  problem.upper.validate();
  problem.inner.validate();
  problem.gradient.validate();
  require(problem.evaluators.size() == cfg.n_benign, ErrorCode::kConfig,
          "one evaluator per benign worker required");
  for (const auto& ev : problem.evaluators)
    require(ev && ev->shape() == problem.shape, ErrorCode::kConfig,
            "evaluator shape differs from the problem shape");

  const auto& shape = problem.shape;
  const std::size_t Nw = cfg.n_benign;
  const std::size_t R = cfg.senders();
  const auto emit = [&](const json& r) {
    if (sink) sink(r);
  };

  std::vector<WorkerState> workers;
  for (std::size_t v = 0; v < Nw; ++v)
    workers.push_back({v, Policy::uniform(shape), 0, stream_for(cfg.seed, v, kUpdate)});
  std::vector<Attacker> attackers;
  for (std::size_t b = 0; b < cfg.n_byzantine; ++b) {
    const std::size_t id = Nw + b;
    attackers.push_back({cfg.mode_of(b),
                         {id, Policy::uniform(shape), 0, stream_for(cfg.seed, id, kUpdate)},
                         stream_for(cfg.seed, id, kInner),
                         std::nullopt});
  }
  std::vector<Rng> inner_rngs, avail_rngs, latency_rngs;
  for (std::size_t v = 0; v < R; ++v) {
    inner_rngs.push_back(stream_for(cfg.seed, v, kInner));
    avail_rngs.push_back(stream_for(cfg.seed, v, kAvail));
    latency_rngs.push_back(stream_for(cfg.seed, v, kLatency));
  }

  std::vector<WorkerState> initial = workers;
  for (const auto& at : attackers) initial.push_back(at.shadow);
  ServerState server = ServerState::initial(shape, R, cfg.epsilon, initial);
  std::vector<ServerSnapshot> snapshots(R, server.snapshot());

  ClockState clock;
  clock.last.assign(R, -1);
  for (std::size_t v = 0; v < R; ++v)
    clock.ready_at.push_back(cfg.latency.of(v).draw(latency_rngs[v]));

  std::vector<Evaluator*> raw;
  for (const auto& ev : problem.evaluators) raw.push_back(ev.get());
  const bool exact = problem.gradient.estimator == GradientEstimator::kExact;
  EvaluatorGradSource source(raw, problem.gradient.options(), exact ? nullptr : &inner_rngs,
                             /*track_values=*/false);
  AttackerAdversary adversary(attackers);

  const auto opt = optima(problem.evaluators);
  std::vector<double> last_mean_loss(Nw, 0.0);
  Plateau plateau(cfg.early_stop);
  SimResult result;

  const auto policies = [&] {
    std::vector<Policy> out;
    for (const auto& w : workers) out.push_back(w.policy);
    return out;
  };
  const auto global_loss = [&](std::string& kind) {
    if (auto e = exact_global_loss(policies(), problem.evaluators)) {
      kind = "exact";
      return *e;
    }
    kind = "mc";
    double s = 0.0;
    for (double l : last_mean_loss) s += l;
    return s / static_cast<double>(Nw);
  };

  for (std::uint64_t k = 0; k < cfg.iterations; ++k) {
    // 1. Reachable set and round timing.
    std::vector<std::size_t> staleness(R);
    for (std::size_t v = 0; v < R; ++v) {
      staleness[v] = clock.staleness(v, k);
      result.max_staleness = std::max(result.max_staleness, staleness[v]);
    }
    WorkerSet reach;
    double start = clock.clock;
    if (cfg.scheduler == Scheduler::kSync) {
      for (std::size_t v = 0; v < R; ++v) reach.push_back(v);
    } else {
      start = round_start(clock);
      std::vector<bool> available(R, false);
      if (cfg.reachability.kind == Reachability::Kind::kSchedule) {
        const auto& set = cfg.reachability.schedule[k % cfg.reachability.schedule.size()];
        for (auto v : set) available[v] = true;
      } else {
        for (std::size_t v = 0; v < R; ++v)
          available[v] = avail_rngs[v].bernoulli(cfg.reachability.availability_of(v));
      }
      reach = form_reachable_set(cfg, k, clock, available, start);
    }
    clock.clock = advance_clock(clock, reach, start);

    // 2. Local steps against each worker's own snapshot.
    std::vector<WorkerUpdateMsg> msgs;
    std::vector<std::size_t> skipped;
    for (auto v : reach) {
      if (v < Nw) {
        try {
          auto step = worker_step(workers[v], snapshots[v], problem.upper, problem.gradient,
                                  *problem.evaluators[v], k);
          workers[v] = std::move(step.state);
          last_mean_loss[v] = step.msg.mean_loss;
          msgs.push_back(std::move(step.msg));
          ++result.successful_steps;
        } catch (const Error& e) {
          if (!e.retryable()) throw;
          skipped.push_back(v);
        }
      } else {
        auto& at = attackers[v - Nw];
        if (at.mode.kind == ByzantineKind::kSignFlip || !at.first) {
          auto step = worker_step(at.shadow, snapshots[v], problem.upper, problem.gradient,
                                  *problem.evaluators.front(), k);
          at.shadow = std::move(step.state);
        }
        std::vector<const ProbVector*> z;
        for (const auto& zi : snapshots[v].z) z.push_back(&zi);
        WorkerUpdateMsg m{v, k, attack(at, z), {}, 0.0};
        if (!at.first) at.first = m.p;
        msgs.push_back(std::move(m));
      }
    }
    result.skipped_steps += skipped.size();

    // 3. Server update.
    server_step(server, msgs, problem.upper);

    // 4. Polyhedron refresh every delta iterations.
    bool checkpoint = (k + 1) % cfg.delta == 0;
    bool phi_skipped = false;
    if (checkpoint) {
      std::vector<DemoChoice> demos(Nw);
      for (std::size_t v = 0; v < Nw; ++v)
        for (const auto& q : workers[v].policy.q)
          demos[v].push_back(static_cast<std::uint32_t>(
              cfg.phi_demos == PhiDemos::kMode ? argmax_lowest(q.values())
                                               : sample_categorical(q, inner_rngs[v])));

      std::vector<LowerState> init = server.lower;
      if (init.empty()) {
        for (std::size_t i = 0; i < shape.M; ++i) {
          LowerState s;
          for (std::size_t v = 0; v < Nw; ++v) s.p.push_back(workers[v].policy.p[i]);
          for (std::size_t v = Nw; v < R; ++v) s.received.push_back(server.last_p[v][i]);
          s.z = server.z[i];
          s.rho.assign(Nw, Vec(shape.N, 0.0));
          init.push_back(std::move(s));
        }
      }
      try {
        auto est = estimate_phi(demos, std::move(init), problem.inner, source,
                                cfg.n_byzantine > 0 ? &adversary : nullptr);
        server.lower = std::move(est.state);
        server.phi = std::move(est.phi);
      } catch (const Error& e) {
        if (!e.retryable()) throw;
        phi_skipped = true;
      }

      if (!phi_skipped) {
        server.window.record(server.polyhedra);
        if (cfg.prune) {
          std::vector<CuttingPlane> before;
          for (const auto& poly : server.polyhedra)
            before.insert(before.end(), poly.planes.begin(), poly.planes.end());
          const auto removed = prune(server.polyhedra, cfg.gamma, server.window);
          for (const auto& pl : before)
            if (std::binary_search(removed.begin(), removed.end(), pl.id))
              emit(plane_record("remove", k, pl));
        }

        const std::uint64_t id = server.next_plane_id;
        bool added = false;
        for (std::size_t i = 0; i < shape.M; ++i) {
          const auto pt = server.point(i);
          if (h_value(demos, pt, server.phi[i]) <= cfg.epsilon) continue;
          auto pl = generate_plane(server.phi[i], pt, cfg.epsilon, id, i, k + 1);
          emit(plane_record("add", k, pl));
          server.polyhedra[i].planes.push_back(std::move(pl));
          added = true;
        }
        if (added) {
          ++server.next_plane_id;
          server.window.record(server.polyhedra, {id});
        }
        for (auto& poly : server.polyhedra) {
          const auto snapshot = poly.planes;
          const auto dropped = enforce_plane_cap(poly, cfg.max_planes);
          for (const auto& pl : snapshot)
            if (std::find(dropped.begin(), dropped.end(), pl.id) != dropped.end())
              emit(plane_record("remove", k, pl));
        }
        if (cfg.record_polyhedra) result.polyhedra_history.push_back(server.polyhedra);
      }
    }

    // 5. Broadcast to the workers that took part, and schedule their next message.
    const auto snap = server.snapshot();
    for (auto v : reach) {
      snapshots[v] = snap;
      if (v < Nw) workers[v].last_sync = k + 1;
      clock.last[v] = static_cast<std::int64_t>(k);
      clock.ready_at[v] = clock.clock + cfg.latency.of(v).draw(latency_rngs[v]);
    }

    // 6. Metrics.
    std::string kind;
    const double loss = global_loss(kind);
    json rec{{"type", "iter"}, {"k", k}, {"clock", clock.clock}, {"reachable", reach},
             {"loss", loss}, {"loss_kind", kind}};
    json residual = json::array();
    std::size_t planes = 0;
    for (std::size_t i = 0; i < shape.M; ++i) {
      double r = 0.0;
      for (const auto& w : workers) r += l1_distance(w.policy.p[i].values(), server.z[i].values());
      residual.push_back(r);
      planes += server.polyhedra[i].planes.size();
    }
    rec["residual"] = residual;
    rec["planes"] = planes;
    rec["staleness"] = staleness;
    const auto acc = decode_accuracy(policies(), opt);
    rec["accuracy"] = acc ? json(*acc) : json(nullptr);
    rec["skipped"] = skipped;
    if (checkpoint) rec["checkpoint"] = phi_skipped ? "phi_failed" : "refreshed";
    emit(rec);

    result.iterations_run = k + 1;
    result.final_loss = loss;
    result.loss_kind = kind;
    if (checkpoint && plateau.update(loss)) {
      result.early_stopped = true;
      break;
    }
  }

  result.workers = policies();
  result.z = server.z;
  result.polyhedra = server.polyhedra;
  for (std::size_t i = 0; i < shape.M; ++i) result.last_points.push_back(server.point(i));
  result.phi = server.phi;
  result.clock = clock.clock;

  json decoded = json::array();
  for (const auto& w : result.workers) decoded.push_back(assignment_json(decode_solution(w)));
  result.summary = {{"type", "summary"},
                    {"mode", "asyn"},
                    {"iterations", result.iterations_run},
                    {"clock", result.clock},
                    {"final_loss", result.final_loss},
                    {"loss_kind", result.loss_kind},
                    {"early_stopped", result.early_stopped},
                    {"skipped_steps", result.skipped_steps},
                    {"max_staleness", result.max_staleness},
                    {"decoded", decoded}};
  emit(result.summary);
  return result;
}

SimResult run_centralized(const SimConfig& cfg, const Problem& problem, const TraceSink& sink) {
  cfg.validate();
  problem.shape.validate();
  problem.upper.validate();
  problem.gradient.validate();
  require(!problem.evaluators.empty(), ErrorCode::kConfig, "no evaluators");
  const auto emit = [&](const json& r) {
    if (sink) sink(r);
  };

  std::vector<std::shared_ptr<Evaluator>> pooled{
      std::make_shared<PooledEvaluator>(problem.evaluators)};
  WorkerState w{0, Policy::uniform(problem.shape), 0, stream_for(cfg.seed, 0, kUpdate)};
  Rng latency_rng = stream_for(cfg.seed, 0, kLatency);
  ServerSnapshot snap{0, std::vector<ProbVector>(problem.shape.M,
                                                 ProbVector::uniform(problem.shape.N)),
                      nullptr};
  UpperConfig upper = problem.upper;
  upper.psi = 0.0;

  const auto opt = optima(pooled);
  Plateau plateau(cfg.early_stop);
  SimResult result;
  double clock = 0.0;
  double last_mc = 0.0;

  for (std::uint64_t k = 0; k < cfg.iterations; ++k) {
    std::vector<std::size_t> skipped;
    try {
      auto step = worker_step(w, snap, upper, problem.gradient, *pooled.front(), k);
      w = std::move(step.state);
      last_mc = step.msg.mean_loss;
      ++result.successful_steps;
    } catch (const Error& e) {
      if (!e.retryable()) throw;
      skipped.push_back(0);
    }
    clock += cfg.latency.of(0).draw(latency_rng);
    result.skipped_steps += skipped.size();

    std::string kind = "exact";
    double loss;
    if (auto e = exact_global_loss({w.policy}, pooled)) {
      loss = *e;
    } else {
      kind = "mc";
      loss = last_mc;
    }
    const auto acc = decode_accuracy({w.policy}, opt);
    emit(json{{"type", "iter"},
              {"k", k},
              {"clock", clock},
              {"reachable", {0}},
              {"loss", loss},
              {"loss_kind", kind},
              {"accuracy", acc ? json(*acc) : json(nullptr)},
              {"skipped", skipped}});

    result.iterations_run = k + 1;
    result.final_loss = loss;
    result.loss_kind = kind;
    if ((k + 1) % cfg.delta == 0 && plateau.update(loss)) {
      result.early_stopped = true;
      break;
    }
  }

  result.workers = {w.policy};
  result.clock = clock;
  result.summary = {{"type", "summary"},
                    {"mode", "cen"},
                    {"iterations", result.iterations_run},
                    {"clock", result.clock},
                    {"final_loss", result.final_loss},
                    {"loss_kind", result.loss_kind},
                    {"early_stopped", result.early_stopped},
                    {"skipped_steps", result.skipped_steps},
                    {"decoded", json::array({assignment_json(decode_solution(w.policy))})}};
  emit(result.summary);
  return result;
}

}  // namespace asyndbt
