// Copyright 2026 The AsynDBT Authors
// SPDX-License-Identifier: Apache-2.0

#include "asyndbt/federated.hpp"

#include <cmath>

#include "asyndbt/error.hpp"

namespace asyndbt {

void UpperConfig::validate() const {
  require(eta_p > 0.0 && eta_q > 0.0 && eta_z > 0.0 && eta_lambda > 0.0, ErrorCode::kConfig,
          "upper step sizes must be > 0");
  require(c1 >= 0.0, ErrorCode::kConfig, "upper.c1 must be >= 0");
  require(psi >= 0.0, ErrorCode::kConfig, "upper.psi must be >= 0");
  require(lambda_max > 0.0, ErrorCode::kConfig, "upper.lambda_max must be > 0");
}

void GradientConfig::validate() const {
  require(samples >= 1, ErrorCode::kConfig, "gradient.samples must be >= 1");
  require(p_min > 0.0 && p_min < 1.0, ErrorCode::kConfig, "gradient.p_min must be in (0, 1)");
}

namespace {

int sign_of(double d) { return (d > 0.0) - (d < 0.0); }

}  // namespace

WorkerStepResult worker_step(const WorkerState& w, const ServerSnapshot& snapshot,
                             const UpperConfig& upper, const GradientConfig& grad,
                             Evaluator& evaluator, std::uint64_t iteration) {
  const auto& shape = evaluator.shape();
  check_policy(shape, w.policy);
  require(snapshot.z.size() == shape.M, ErrorCode::kInvalidArgument,
          "snapshot slot count mismatch");

  WorkerStepResult out{w, {}};
  Gradients g;
  double mean_loss = 0.0;
  if (grad.estimator == GradientEstimator::kExact) {
    g = exact_gradients(w.policy, evaluator);
    mean_loss = exact_expected_loss(w.policy, evaluator);
  } else {
    auto r = reinforce_gradients(w.policy, evaluator, grad.options(), out.state.rng);
    g = std::move(r.grad);
    mean_loss = r.mean_loss;
  }

  for (std::size_t i = 0; i < shape.M; ++i) {
    const auto& p = w.policy.p[i];
    const auto& z = snapshot.z[i];
    Vec d = g.p[i];
    if (snapshot.planes && i < snapshot.planes->size())
      for (const auto& pl : (*snapshot.planes)[i].planes) {
        require(w.worker_id < pl.a.size(), ErrorCode::kInvariant,
                "plane has no block for this worker");
        for (std::size_t j = 0; j < shape.N; ++j) d[j] += pl.dual * pl.a[w.worker_id][j];
      }
    Vec next(shape.N);
    for (std::size_t j = 0; j < shape.N; ++j)
      next[j] = p[j] - upper.eta_p * (d[j] + upper.psi * sign_of(p[j] - z[j]));
    out.state.policy.p[i] = project_to_simplex(next);
  }
  for (std::size_t u = 0; u < shape.U; ++u) {
    const auto& q = w.policy.q[u];
    Vec next(shape.V);
    for (std::size_t k = 0; k < shape.V; ++k) next[k] = q[k] - upper.eta_q * g.q[u][k];
    out.state.policy.q[u] = project_to_simplex(next);
  }

  out.msg.worker_id = w.worker_id;
  out.msg.iteration = iteration;
  out.msg.mean_loss = mean_loss;
  for (const auto& p : out.state.policy.p) out.msg.p.push_back(p.vec());
  for (const auto& q : out.state.policy.q) out.msg.q.push_back(q.vec());
  return out;
}

ServerState ServerState::initial(const ProblemShape& shape, std::size_t senders,
                                 double epsilon, const std::vector<WorkerState>& workers) {
  require(workers.size() == senders, ErrorCode::kInvalidArgument,
          "one initial worker state per sender");
  ServerState s;
  s.z.assign(shape.M, ProbVector::uniform(shape.N));
  for (std::size_t i = 0; i < shape.M; ++i) s.polyhedra.push_back({i, {}, epsilon});
  for (const auto& w : workers) {
    auto& row = s.last_p.emplace_back();
    for (const auto& p : w.policy.p) row.push_back(p.vec());
  }
  return s;
}

ServerSnapshot ServerState::snapshot() const {
  return {iteration, z, std::make_shared<const PolyhedronSet>(polyhedra)};
}

StackedPoint ServerState::point(std::size_t slot) const {
  StackedPoint pt;
  for (const auto& sender : last_p) pt.p.push_back(sender[slot]);
  pt.z = z[slot].vec();
  return pt;
}

void server_step(ServerState& s, const std::vector<WorkerUpdateMsg>& updates,
                 const UpperConfig& upper) {
  const std::size_t slots = s.z.size();
  for (const auto& m : updates) {
    require(m.worker_id < s.last_p.size(), ErrorCode::kInvalidArgument,
            "update from unknown sender");
    require(m.p.size() == slots, ErrorCode::kInvalidArgument, "update slot count mismatch");
    for (std::size_t i = 0; i < slots; ++i) {
      require(m.p[i].size() == s.z[i].size(), ErrorCode::kInvalidArgument,
              "update dimension mismatch");
      s.last_p[m.worker_id][i] = sanitize_message(m.p[i]);
    }
  }

  for (std::size_t i = 0; i < slots; ++i) {
    const std::size_t n = s.z[i].size();
    Vec step(n, 0.0);
    for (const auto& pl : s.polyhedra[i].planes)
      for (std::size_t j = 0; j < n; ++j) step[j] += pl.dual * pl.b[j];
    if (upper.psi > 0.0)
      for (const auto& sender : s.last_p)
        for (std::size_t j = 0; j < n; ++j)
          step[j] += upper.psi * sign_of(s.z[i][j] - sender[i][j]);
    Vec z(n);
    for (std::size_t j = 0; j < n; ++j) z[j] = s.z[i][j] - upper.eta_z * step[j];
    s.z[i] = project_to_simplex(z);

    const auto pt = s.point(i);
    for (auto& pl : s.polyhedra[i].planes)
      pl.dual = project_dual(
          pl.dual + upper.eta_lambda * (plane_value(pl, pt) - upper.c1 * pl.dual),
          upper.lambda_max);
  }
  ++s.iteration;
}

DiscreteAssignment decode_solution(const Policy& policy) {
  DiscreteAssignment a;
  for (const auto& p : policy.p)
    a.tokens.push_back(static_cast<std::uint32_t>(argmax_lowest(p.values())));
  for (const auto& q : policy.q)
    a.demos.push_back(static_cast<std::uint32_t>(argmax_lowest(q.values())));
  return a;
}

}  // namespace asyndbt
