// Copyright 2026 The AsynDBT Authors
// SPDX-License-Identifier: Apache-2.0

#include "asyndbt/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "asyndbt/error.hpp"
#include "asyndbt/remote.hpp"

namespace asyndbt {

void ProblemShape::validate() const {
  require(M >= 1 && N >= 1 && V >= 1, ErrorCode::kConfig,
          "shape: M, N and V must be >= 1");
}

double ProblemShape::assignment_count() const {
  return std::pow(static_cast<double>(N), static_cast<double>(M)) *
         std::pow(static_cast<double>(V), static_cast<double>(U));
}

void check_assignment(const ProblemShape& shape, const DiscreteAssignment& a) {
  require(a.tokens.size() == shape.M && a.demos.size() == shape.U,
          ErrorCode::kMalformedAssignment, "assignment has wrong slot count");
  for (auto j : a.tokens)
    require(j < shape.N, ErrorCode::kMalformedAssignment,
            "token index " + std::to_string(j) + " out of range");
  for (auto k : a.demos)
    require(k < shape.V, ErrorCode::kMalformedAssignment,
            "demo index " + std::to_string(k) + " out of range");
}

Policy Policy::uniform(const ProblemShape& shape) {
  Policy out;
  out.p.assign(shape.M, ProbVector::uniform(shape.N));
  out.q.assign(shape.U, ProbVector::uniform(shape.V));
  return out;
}

void check_policy(const ProblemShape& shape, const Policy& policy) {
  require(policy.p.size() == shape.M && policy.q.size() == shape.U,
          ErrorCode::kInvalidArgument, "policy slot count mismatch");
  for (const auto& p : policy.p)
    require(p.size() == shape.N, ErrorCode::kInvalidArgument,
            "token distribution has wrong dimension");
  for (const auto& q : policy.q)
    require(q.size() == shape.V, ErrorCode::kInvalidArgument,
            "demo distribution has wrong dimension");
}

std::string evaluator_kind(const EvaluatorSpec& spec) {
  switch (spec.index()) {
    case 0: return "table";
    case 1: return "separable";
    default: return "remote";
  }
}

TableSpec random_table(const ProblemShape& shape, std::uint64_t seed,
                       double lo, double hi) {
  shape.validate();
  require(shape.enumerable(), ErrorCode::kShapeTooLarge,
          "table evaluator needs N^M * V^U <= 1e6");
  Rng rng(seed);
  TableSpec spec;
  spec.losses.resize(static_cast<std::size_t>(shape.assignment_count()));
  for (auto& v : spec.losses) v = rng.uniform(lo, hi);
  return spec;
}

SeparableSpec random_separable(const ProblemShape& shape, std::uint64_t seed,
                               double lo, double hi) {
  shape.validate();
  Rng rng(seed);
  auto draw_row = [&](std::size_t n) {
    Vec row(n);
    for (auto& v : row) v = rng.uniform(lo, hi);
    // Separate the minimum from the runner-up so the optimum is unique.
    const auto best = std::min_element(row.begin(), row.end()) - row.begin();
    for (std::size_t j = 0; j < n; ++j)
      if (static_cast<std::ptrdiff_t>(j) != best)
        row[j] = std::max(row[j], row[best] + 0.05 * (hi - lo));
    return row;
  };
  SeparableSpec spec;
  for (std::size_t i = 0; i < shape.M; ++i) spec.token_scores.push_back(draw_row(shape.N));
  for (std::size_t u = 0; u < shape.U; ++u) spec.demo_scores.push_back(draw_row(shape.V));
  return spec;
}

// ---------------------------------------------------------------------------

std::vector<double> Evaluator::evaluate_batch(
    std::span<const DiscreteAssignment> batch) {
  std::vector<double> out;
  out.reserve(batch.size());
  for (const auto& a : batch) out.push_back(evaluate(a));
  return out;
}

TableEvaluator::TableEvaluator(ProblemShape shape, TableSpec spec)
    : shape_(shape), losses_(std::move(spec.losses)) {
  shape_.validate();
  require(shape_.enumerable(), ErrorCode::kShapeTooLarge,
          "table evaluator needs N^M * V^U <= 1e6");
  require(losses_.size() == static_cast<std::size_t>(shape_.assignment_count()),
          ErrorCode::kConfig,
          "loss table must have N^M * V^U = " +
              std::to_string(static_cast<std::size_t>(shape_.assignment_count())) +
              " entries, got " + std::to_string(losses_.size()));
  for (double v : losses_)
    require(std::isfinite(v) && v >= 0.0, ErrorCode::kConfig,
            "loss table entries must be finite and >= 0");
}

std::size_t TableEvaluator::index_of(const ProblemShape& shape,
                                     const DiscreteAssignment& a) {
  std::size_t idx = 0;
  for (auto j : a.tokens) idx = idx * shape.N + j;
  for (auto k : a.demos) idx = idx * shape.V + k;
  return idx;
}

double TableEvaluator::evaluate(const DiscreteAssignment& a) {
  check_assignment(shape_, a);
  return losses_[index_of(shape_, a)];
}

SeparableEvaluator::SeparableEvaluator(ProblemShape shape, SeparableSpec spec)
    : shape_(shape), spec_(std::move(spec)) {
  shape_.validate();
  auto check_rows = [](const std::vector<Vec>& rows, std::size_t count,
                       std::size_t width, const char* what) {
    require(rows.size() == count, ErrorCode::kConfig,
            std::string(what) + ": wrong number of slots");
    for (const auto& r : rows) {
      require(r.size() == width, ErrorCode::kConfig,
              std::string(what) + ": wrong row width");
      for (double v : r)
        require(std::isfinite(v) && v >= 0.0, ErrorCode::kConfig,
                std::string(what) + ": scores must be finite and >= 0");
    }
  };
  check_rows(spec_.token_scores, shape_.M, shape_.N, "token_scores");
  check_rows(spec_.demo_scores, shape_.U, shape_.V, "demo_scores");
  for (const auto& it : spec_.interactions) {
    require(it.token_slot < shape_.M && it.demo_slot < shape_.U,
            ErrorCode::kConfig, "interaction slot out of range");
    check_rows(it.weights, shape_.N, shape_.V, "interaction weights");
  }
}

double SeparableEvaluator::evaluate(const DiscreteAssignment& a) {
  check_assignment(shape_, a);
  double loss = 0.0;
  for (std::size_t i = 0; i < shape_.M; ++i) loss += spec_.token_scores[i][a.tokens[i]];
  for (std::size_t u = 0; u < shape_.U; ++u) loss += spec_.demo_scores[u][a.demos[u]];
  for (const auto& it : spec_.interactions)
    loss += it.weights[a.tokens[it.token_slot]][a.demos[it.demo_slot]];
  return loss;
}

std::optional<double> SeparableEvaluator::expected_loss(const Policy& policy) const {
  check_policy(shape_, policy);
  double e = 0.0;
  for (std::size_t i = 0; i < shape_.M; ++i)
    for (std::size_t j = 0; j < shape_.N; ++j)
      e += policy.p[i][j] * spec_.token_scores[i][j];
  for (std::size_t u = 0; u < shape_.U; ++u)
    for (std::size_t k = 0; k < shape_.V; ++k)
      e += policy.q[u][k] * spec_.demo_scores[u][k];
  for (const auto& it : spec_.interactions)
    for (std::size_t j = 0; j < shape_.N; ++j)
      for (std::size_t k = 0; k < shape_.V; ++k)
        e += policy.p[it.token_slot][j] * policy.q[it.demo_slot][k] * it.weights[j][k];
  return e;
}

std::optional<DiscreteAssignment> SeparableEvaluator::known_optimum() const {
  if (!spec_.interactions.empty()) return std::nullopt;
  DiscreteAssignment a;
  for (const auto& row : spec_.token_scores)
    a.tokens.push_back(static_cast<std::uint32_t>(
        std::min_element(row.begin(), row.end()) - row.begin()));
  for (const auto& row : spec_.demo_scores)
    a.demos.push_back(static_cast<std::uint32_t>(
        std::min_element(row.begin(), row.end()) - row.begin()));
  return a;
}

PooledEvaluator::PooledEvaluator(std::vector<std::shared_ptr<Evaluator>> parts)
    : parts_(std::move(parts)) {
  require(!parts_.empty(), ErrorCode::kInvalidArgument, "pooled evaluator needs parts");
  for (const auto& p : parts_)
    require(p->shape() == parts_.front()->shape(), ErrorCode::kConfig,
            "pooled evaluators must share one shape");
}

double PooledEvaluator::evaluate(const DiscreteAssignment& a) {
  double sum = 0.0;
  for (auto& p : parts_) sum += p->evaluate(a);
  return sum / static_cast<double>(parts_.size());
}

std::vector<double> PooledEvaluator::evaluate_batch(
    std::span<const DiscreteAssignment> batch) {
  std::vector<double> sum(batch.size(), 0.0);
  for (auto& p : parts_) {
    auto part = p->evaluate_batch(batch);
    for (std::size_t s = 0; s < sum.size(); ++s) sum[s] += part[s];
  }
  for (auto& v : sum) v /= static_cast<double>(parts_.size());
  return sum;
}

bool PooledEvaluator::is_pure() const {
  return std::all_of(parts_.begin(), parts_.end(),
                     [](const auto& p) { return p->is_pure(); });
}

std::optional<double> PooledEvaluator::expected_loss(const Policy& policy) const {
  double sum = 0.0;
  for (const auto& p : parts_) {
    auto e = p->expected_loss(policy);
    if (!e) return std::nullopt;
    sum += *e;
  }
  return sum / static_cast<double>(parts_.size());
}

std::unique_ptr<Evaluator> make_evaluator(const ProblemShape& shape,
                                          const EvaluatorSpec& spec) {
  if (const auto* t = std::get_if<TableSpec>(&spec))
    return std::make_unique<TableEvaluator>(shape, *t);
  if (const auto* s = std::get_if<SeparableSpec>(&spec))
    return std::make_unique<SeparableEvaluator>(shape, *s);
  return std::make_unique<RemoteEvaluator>(shape, std::get<RemoteSpec>(spec));
}

double evaluate(Evaluator& evaluator, const DiscreteAssignment& a) {
  check_assignment(evaluator.shape(), a);
  const double loss = evaluator.evaluate(a);
  require(std::isfinite(loss) && loss >= 0.0, ErrorCode::kEvaluator,
          "evaluator returned a loss that is not finite and >= 0");
  return loss;
}

// ---------------------------------------------------------------------------

void for_each_assignment(const ProblemShape& shape,
                         const std::function<void(const DiscreteAssignment&)>& fn) {
  shape.validate();
  require(shape.enumerable(), ErrorCode::kShapeTooLarge,
          "enumeration needs N^M * V^U <= 1e6");
  DiscreteAssignment a{std::vector<std::uint32_t>(shape.M, 0),
                       std::vector<std::uint32_t>(shape.U, 0)};
  const std::size_t slots = shape.M + shape.U;
  auto radix = [&](std::size_t s) { return s < shape.M ? shape.N : shape.V; };
  auto digit = [&](std::size_t s) -> std::uint32_t& {
    return s < shape.M ? a.tokens[s] : a.demos[s - shape.M];
  };
  while (true) {
    fn(a);
    // Increment the mixed-radix counter, last slot least significant.
    std::size_t s = slots;
    while (s > 0) {
      --s;
      if (++digit(s) < radix(s)) break;
      digit(s) = 0;
      if (s == 0) return;
    }
    if (slots == 0) return;
  }
}

namespace {

// Probability factors of `a` in slot order (tokens, then demos).
void slot_probs(const Policy& policy, const DiscreteAssignment& a, Vec& out) {
  out.clear();
  for (std::size_t i = 0; i < a.tokens.size(); ++i) out.push_back(policy.p[i][a.tokens[i]]);
  for (std::size_t u = 0; u < a.demos.size(); ++u) out.push_back(policy.q[u][a.demos[u]]);
}

}  // namespace

double exact_expected_loss(const Policy& policy, Evaluator& evaluator) {
  const auto& shape = evaluator.shape();
  check_policy(shape, policy);
  double e = 0.0;
  Vec probs;
  for_each_assignment(shape, [&](const DiscreteAssignment& a) {
    slot_probs(policy, a, probs);
    double w = 1.0;
    for (double pr : probs) w *= pr;
    if (w != 0.0) e += w * evaluate(evaluator, a);
  });
  return e;
}

Gradients exact_gradients(const Policy& policy, Evaluator& evaluator) {
  const auto& shape = evaluator.shape();
  check_policy(shape, policy);
  Gradients g;
  g.p.assign(shape.M, Vec(shape.N, 0.0));
  g.q.assign(shape.U, Vec(shape.V, 0.0));
  const std::size_t slots = shape.M + shape.U;
  Vec probs, prefix(slots + 1), suffix(slots + 1);
  for_each_assignment(shape, [&](const DiscreteAssignment& a) {
    slot_probs(policy, a, probs);
    prefix[0] = 1.0;
    for (std::size_t s = 0; s < slots; ++s) prefix[s + 1] = prefix[s] * probs[s];
    suffix[slots] = 1.0;
    for (std::size_t s = slots; s > 0; --s) suffix[s - 1] = suffix[s] * probs[s - 1];
    bool any = false;
    for (std::size_t s = 0; s < slots && !any; ++s) any = prefix[s] * suffix[s + 1] != 0.0;
    if (!any) return;
    const double loss = evaluate(evaluator, a);
    for (std::size_t s = 0; s < slots; ++s) {
      const double others = prefix[s] * suffix[s + 1];
      if (s < shape.M)
        g.p[s][a.tokens[s]] += others * loss;
      else
        g.q[s - shape.M][a.demos[s - shape.M]] += others * loss;
    }
  });
  return g;
}

OptimumReport enumerate_optimum(Evaluator& evaluator) {
  OptimumReport best;
  best.loss = std::numeric_limits<double>::infinity();
  for_each_assignment(evaluator.shape(), [&](const DiscreteAssignment& a) {
    const double loss = evaluate(evaluator, a);
    if (loss < best.loss) best = {a, loss};
  });
  return best;
}

// ---------------------------------------------------------------------------

DiscreteAssignment sample_assignment(const Policy& policy, Rng& rng) {
  DiscreteAssignment a;
  a.tokens.reserve(policy.p.size());
  a.demos.reserve(policy.q.size());
  for (const auto& p : policy.p)
    a.tokens.push_back(static_cast<std::uint32_t>(sample_categorical(p, rng)));
  for (const auto& q : policy.q)
    a.demos.push_back(static_cast<std::uint32_t>(sample_categorical(q, rng)));
  return a;
}

ReinforceResult reinforce_gradients(const Policy& policy, Evaluator& evaluator,
                                    const ReinforceOptions& opts, Rng& rng,
                                    const std::vector<std::uint32_t>* fixed_demos) {
  const auto& shape = evaluator.shape();
  check_policy(shape, policy);
  require(opts.samples >= 1, ErrorCode::kInvalidArgument, "samples must be >= 1");
  const double max_dim = static_cast<double>(std::max(shape.N, shape.U > 0 ? shape.V : 1));
  require(opts.p_min > 0.0 && opts.p_min <= 1.0 / max_dim, ErrorCode::kInvalidArgument,
          "p_min must lie in (0, 1/n]");

  const std::size_t n = opts.samples;
  std::vector<DiscreteAssignment> draws;
  draws.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    DiscreteAssignment a;
    for (const auto& p : policy.p)
      a.tokens.push_back(static_cast<std::uint32_t>(sample_categorical(p, rng)));
    if (fixed_demos) {
      a.demos = *fixed_demos;
    } else {
      for (const auto& q : policy.q)
        a.demos.push_back(static_cast<std::uint32_t>(sample_categorical(q, rng)));
    }
    check_assignment(shape, a);
    draws.push_back(std::move(a));
  }

  auto losses = evaluator.evaluate_batch(draws);
  require(losses.size() == n, ErrorCode::kEvaluator, "evaluator returned a short batch");
  double total = 0.0;
  for (double l : losses) {
    require(std::isfinite(l) && l >= 0.0, ErrorCode::kEvaluator,
            "evaluator returned a loss that is not finite and >= 0");
    total += l;
  }

  ReinforceResult out;
  out.grad.p.assign(shape.M, Vec(shape.N, 0.0));
  out.grad.q.assign(shape.U, Vec(shape.V, 0.0));
  out.mean_loss = total / static_cast<double>(n);
  if (opts.keep_samples) {
    out.samples.reserve(n);
    out.weights.reserve(n);
  }

  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t s = 0; s < n; ++s) {
    double baseline = 0.0;
    if (opts.baseline && n > 1)
      baseline = (total - losses[s]) / static_cast<double>(n - 1);
    const double w = losses[s] - baseline;
    const auto& a = draws[s];
    for (std::size_t i = 0; i < shape.M; ++i)
      out.grad.p[i][a.tokens[i]] += inv_n * w / std::max(policy.p[i][a.tokens[i]], opts.p_min);
    if (!fixed_demos)
      for (std::size_t u = 0; u < shape.U; ++u)
        out.grad.q[u][a.demos[u]] += inv_n * w / std::max(policy.q[u][a.demos[u]], opts.p_min);
    if (opts.keep_samples) {
      out.samples.push_back({a, losses[s]});
      out.weights.push_back(w);
    }
  }
  return out;
}

}  // namespace asyndbt
