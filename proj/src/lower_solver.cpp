// Copyright 2026 The AsynDBT Authors
// SPDX-License-Identifier: Apache-2.0

#include "asyndbt/lower_solver.hpp"

#include <algorithm>
#include <cmath>

#include "asyndbt/error.hpp"

namespace asyndbt {

void InnerConfig::validate() const {
  require(mu > 0.0, ErrorCode::kConfig, "inner.mu must be > 0");
  require(psi >= 0.0, ErrorCode::kConfig, "inner.psi must be >= 0");
  require(eta_p > 0.0 && eta_z > 0.0 && eta_rho > 0.0, ErrorCode::kConfig,
          "inner step sizes must be > 0");
}

StackedPoint LowerState::stacked() const {
  StackedPoint out;
  out.p.reserve(p.size());
  for (const auto& pv : p) out.p.push_back(pv.vec());
  for (const auto& r : received) out.p.push_back(r);
  out.z = z.vec();
  return out;
}

Vec sanitize_message(Vec x) {
  for (auto& v : x) v = std::isnan(v) ? 0.0 : std::clamp(v, 0.0, 1.0);
  return x;
}

LagrangianGradients grad_gp(const LowerState& state, std::size_t worker,
                            const Vec& g_grad, double mu) {
  const std::size_t n = state.z.size();
  const std::size_t benign = state.n_benign();
  require(worker < benign, ErrorCode::kInvalidArgument, "grad_gp: worker out of range");
  require(g_grad.size() == n, ErrorCode::kInvalidArgument, "grad_gp: dimension mismatch");

  LagrangianGradients g{Vec(n), Vec(n, 0.0), Vec(n)};
  const auto& pv = state.p[worker];
  for (std::size_t j = 0; j < n; ++j) {
    g.d_p[j] = g_grad[j] + state.rho[worker][j] + mu * (pv[j] - state.z[j]);
    g.d_rho[j] = pv[j] - state.z[j];
  }
  for (std::size_t v = 0; v < benign; ++v)
    for (std::size_t j = 0; j < n; ++j)
      g.d_z[j] += -state.rho[v][j] + mu * (state.z[j] - state.p[v][j]);
  return g;
}

double lagrangian_value(const LowerState& state, const Vec& g_values, double mu) {
  require(g_values.size() == state.n_benign(), ErrorCode::kInvalidArgument,
          "lagrangian_value: one g value per worker");
  double total = 0.0;
  for (std::size_t v = 0; v < state.n_benign(); ++v) {
    double lin = 0.0, sq = 0.0;
    for (std::size_t j = 0; j < state.z.size(); ++j) {
      const double d = state.p[v][j] - state.z[j];
      lin += state.rho[v][j] * d;
      sq += d * d;
    }
    total += g_values[v] + lin + 0.5 * mu * sq;
  }
  return total;
}

ProbVector inner_worker_step(const LowerState& state, std::size_t worker,
                             const Vec& g_grad, const InnerConfig& cfg) {
  const auto g = grad_gp(state, worker, g_grad, cfg.mu);
  const auto& pv = state.p[worker];
  Vec next(pv.size());
  for (std::size_t j = 0; j < next.size(); ++j) {
    const double d = pv[j] - state.z[j];
    const double pull = static_cast<double>((d > 0.0) - (d < 0.0));
    next[j] = pv[j] - cfg.eta_p * (g.d_p[j] + cfg.psi * pull);
  }
  return project_to_simplex(next);
}

void inner_server_step(LowerState& state, const InnerConfig& cfg) {
  const std::size_t n = state.z.size();
  const Vec zero(n, 0.0);
  Vec step = state.n_benign() > 0 ? grad_gp(state, 0, zero, cfg.mu).d_z : zero;
  auto add_sign = [&](std::span<const double> pv) {
    for (std::size_t j = 0; j < n; ++j) {
      const double d = state.z[j] - pv[j];
      step[j] += cfg.psi * static_cast<double>((d > 0.0) - (d < 0.0));
    }
  };
  if (cfg.psi > 0.0) {
    for (const auto& pv : state.p) add_sign(pv.values());
    for (const auto& r : state.received) add_sign(r);
  }
  Vec z(n);
  for (std::size_t j = 0; j < n; ++j) z[j] = state.z[j] - cfg.eta_z * step[j];
  state.z = project_to_simplex(z);
  for (std::size_t v = 0; v < state.n_benign(); ++v)
    for (std::size_t j = 0; j < n; ++j)
      state.rho[v][j] += cfg.eta_rho * (state.p[v][j] - state.z[j]);
}

// ---------------------------------------------------------------------------

EvaluatorGradSource::EvaluatorGradSource(std::vector<Evaluator*> evaluators,
                                         ReinforceOptions opts, std::vector<Rng>* rngs,
                                         bool track_values)
    : evaluators_(std::move(evaluators)), opts_(opts), rngs_(rngs),
      track_values_(track_values) {
  require(!rngs_ || rngs_->size() >= evaluators_.size(), ErrorCode::kInvalidArgument,
          "one random stream per worker required");
}

Policy EvaluatorGradSource::pinned(std::size_t worker, const DemoChoice& demos,
                                   const std::vector<ProbVector>& p) const {
  const auto& shape = evaluators_.at(worker)->shape();
  require(demos.size() == shape.U, ErrorCode::kInvalidArgument,
          "demo realization has wrong length");
  Policy policy;
  policy.p = p;
  for (std::size_t u = 0; u < shape.U; ++u)
    policy.q.push_back(ProbVector::one_hot(shape.V, demos[u]));
  return policy;
}

std::vector<Vec> EvaluatorGradSource::grad(std::size_t worker, const DemoChoice& demos,
                                           const std::vector<ProbVector>& p) {
  const auto policy = pinned(worker, demos, p);
  if (!rngs_) return exact_gradients(policy, *evaluators_[worker]).p;
  return reinforce_gradients(policy, *evaluators_[worker], opts_, (*rngs_)[worker], &demos)
      .grad.p;
}

std::optional<double> EvaluatorGradSource::value(std::size_t worker,
                                                 const DemoChoice& demos,
                                                 const std::vector<ProbVector>& p) {
  if (!track_values_) return std::nullopt;
  const auto policy = pinned(worker, demos, p);
  auto& ev = *evaluators_[worker];
  if (auto e = ev.expected_loss(policy)) return e;
  if (ev.shape().enumerable() && ev.is_pure()) return exact_expected_loss(policy, ev);
  return std::nullopt;
}

// ---------------------------------------------------------------------------

PhiResult estimate_phi(const std::vector<DemoChoice>& demos, std::vector<LowerState> init,
                       const InnerConfig& cfg, LowerGradSource& source,
                       InnerAdversary* adversary) {
  cfg.validate();
  require(!init.empty(), ErrorCode::kInvalidArgument, "estimate_phi: no slots");
  const std::size_t slots = init.size();
  const std::size_t benign = init.front().n_benign();
  const std::size_t senders = init.front().n_senders();
  require(demos.size() == benign, ErrorCode::kInvalidArgument,
          "estimate_phi: one demo realization per worker");
  for (const auto& s : init)
    require(s.n_benign() == benign && s.n_senders() == senders && s.rho.size() == benign,
            ErrorCode::kInvalidArgument,
            "estimate_phi: slots disagree on worker counts");

  PhiResult out;
  out.state = std::move(init);
  auto worker_slots = [&](std::size_t v) {
    std::vector<ProbVector> p;
    p.reserve(slots);
    for (const auto& s : out.state) p.push_back(s.p[v]);
    return p;
  };

  for (std::size_t k = 0; k < cfg.K; ++k) {
    // Every worker steps against round-k state before any server update.
    std::vector<std::vector<ProbVector>> next(benign);
    for (std::size_t v = 0; v < benign; ++v) {
      const auto g = source.grad(v, demos[v], worker_slots(v));
      require(g.size() == slots, ErrorCode::kInvalidArgument,
              "gradient source returned wrong slot count");
      for (std::size_t i = 0; i < slots; ++i)
        next[v].push_back(inner_worker_step(out.state[i], v, g[i], cfg));
    }
    for (std::size_t v = 0; v < benign; ++v)
      for (std::size_t i = 0; i < slots; ++i) out.state[i].p[v] = next[v][i];

    if (adversary && senders > benign) {
      std::vector<const ProbVector*> z;
      for (const auto& s : out.state) z.push_back(&s.z);
      for (std::size_t b = benign; b < senders; ++b) {
        auto msg = adversary->send(b - benign, z);
        require(msg.size() == slots, ErrorCode::kInvalidArgument,
                "adversary returned wrong slot count");
        for (std::size_t i = 0; i < slots; ++i) {
          require(msg[i].size() == out.state[i].z.size(), ErrorCode::kInvalidArgument,
                  "adversary returned wrong dimension");
          out.state[i].received[b - benign] = sanitize_message(std::move(msg[i]));
        }
      }
    }

    for (auto& s : out.state) inner_server_step(s, cfg);

    bool have_values = true;
    Vec gv(benign);
    for (std::size_t v = 0; v < benign && have_values; ++v) {
      const auto val = source.value(v, demos[v], worker_slots(v));
      have_values = val.has_value();
      if (have_values) gv[v] = *val;
    }
    if (have_values) {
      double total = 0.0;
      for (const auto& s : out.state) total += lagrangian_value(s, gv, cfg.mu);
      out.lagrangian_trace.push_back(total);
    }
  }

  for (const auto& s : out.state)
    out.phi.push_back(PhiEstimate{s.stacked(), demos, cfg.K});
  return out;
}

double h_value(const std::vector<DemoChoice>& demos, const StackedPoint& point,
               const PhiEstimate& phi) {
  require(demos == phi.demos_used, ErrorCode::kInvalidArgument,
          "h_value: demo realization differs from the one phi was built for");
  require(point.p.size() == phi.stacked.p.size(), ErrorCode::kInvalidArgument,
          "h_value: block count mismatch");
  double h = l1_distance(point.z, phi.stacked.z);
  for (std::size_t v = 0; v < point.p.size(); ++v)
    h += l1_distance(point.p[v], phi.stacked.p[v]);
  return h;
}

}  // namespace asyndbt
