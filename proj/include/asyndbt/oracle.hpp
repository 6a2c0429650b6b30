// Copyright 2026 The AsynDBT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "asyndbt/rng.hpp"
#include "asyndbt/simplex.hpp"

namespace asyndbt {

inline constexpr double kMaxEnumeration = 1e6;

/// M fragment tokens over an N-word vocabulary, U demonstration slots with
/// V candidates each.
struct ProblemShape {
  std::size_t M = 1;
  std::size_t N = 2;
  std::size_t U = 0;
  std::size_t V = 1;

  void validate() const;
  /// N^M * V^U as a double (it overflows integers at realistic vocabulary sizes).
  double assignment_count() const;
  bool enumerable() const { return assignment_count() <= kMaxEnumeration; }

  friend bool operator==(const ProblemShape&, const ProblemShape&) = default;
};

struct DiscreteAssignment {
  std::vector<std::uint32_t> tokens;  // length M, each < N
  std::vector<std::uint32_t> demos;   // length U, each < V

  friend bool operator==(const DiscreteAssignment&,
                         const DiscreteAssignment&) = default;
};

/// Throws kMalformedAssignment when `a` does not fit `shape`.
void check_assignment(const ProblemShape& shape, const DiscreteAssignment& a);

struct LossSample {
  DiscreteAssignment assignment;
  double loss = 0.0;
};

/// Distributions for every token slot (p) and demo slot (q).
struct Policy {
  std::vector<ProbVector> p;
  std::vector<ProbVector> q;

  static Policy uniform(const ProblemShape& shape);
  friend bool operator==(const Policy&, const Policy&) = default;
};

void check_policy(const ProblemShape& shape, const Policy& policy);

// ---------------------------------------------------------------------------
// Evaluator specs

/// Full loss table indexed by (tokens..., demos...) in row-major order,
/// token slot 0 most significant.
struct TableSpec {
  Vec losses;

  friend bool operator==(const TableSpec&, const TableSpec&) = default;
};

/// token_slot x demo_slot coupling: adds weights[j][k].
struct Interaction {
  std::size_t token_slot = 0;
  std::size_t demo_slot = 0;
  std::vector<Vec> weights;  // N rows of V entries

  friend bool operator==(const Interaction&, const Interaction&) = default;
};

/// loss = sum_i token_scores[i][j_i] + sum_u demo_scores[u][k_u]
///        + sum interactions.
struct SeparableSpec {
  std::vector<Vec> token_scores;  // M x N
  std::vector<Vec> demo_scores;   // U x V
  std::vector<Interaction> interactions;

  friend bool operator==(const SeparableSpec&, const SeparableSpec&) = default;
};

struct RemoteSpec {
  std::string endpoint;  // tcp:HOST:PORT or stdio:CMD
  double timeout_s = 30.0;
  std::string prompt_template;      // optional; enables the "prompt" field
  std::vector<std::string> vocab;   // required with a template
  std::string corpus_path;          // optional demo corpus (JSON)

  friend bool operator==(const RemoteSpec&, const RemoteSpec&) = default;
};

using EvaluatorSpec = std::variant<TableSpec, SeparableSpec, RemoteSpec>;

std::string evaluator_kind(const EvaluatorSpec& spec);

TableSpec random_table(const ProblemShape& shape, std::uint64_t seed,
                       double lo = 0.0, double hi = 1.0);

/// Scores uniform in [lo, hi]; the argmin of each slot is unique.
SeparableSpec random_separable(const ProblemShape& shape, std::uint64_t seed,
                               double lo = 0.0, double hi = 1.0);

// ---------------------------------------------------------------------------
// Evaluators

class Evaluator {
 public:
  virtual ~Evaluator() = default;

  virtual const ProblemShape& shape() const = 0;
  virtual double evaluate(const DiscreteAssignment& a) = 0;
  /// Results in input order. Remote evaluators pipeline the requests.
  virtual std::vector<double> evaluate_batch(
      std::span<const DiscreteAssignment> batch);
  /// Whether repeated calls with the same assignment return the same loss.
  virtual bool is_pure() const { return true; }
  /// E[loss] under the product distribution when a closed form exists.
  virtual std::optional<double> expected_loss(const Policy&) const {
    return std::nullopt;
  }
  /// A minimizing assignment when it is cheap to find without enumeration.
  virtual std::optional<DiscreteAssignment> known_optimum() const {
    return std::nullopt;
  }
};

class TableEvaluator final : public Evaluator {
 public:
  TableEvaluator(ProblemShape shape, TableSpec spec);

  const ProblemShape& shape() const override { return shape_; }
  double evaluate(const DiscreteAssignment& a) override;

  static std::size_t index_of(const ProblemShape& shape,
                              const DiscreteAssignment& a);

 private:
  ProblemShape shape_;
  Vec losses_;
};

class SeparableEvaluator final : public Evaluator {
 public:
  SeparableEvaluator(ProblemShape shape, SeparableSpec spec);

  const ProblemShape& shape() const override { return shape_; }
  double evaluate(const DiscreteAssignment& a) override;
  std::optional<double> expected_loss(const Policy& policy) const override;
  std::optional<DiscreteAssignment> known_optimum() const override;

 private:
  ProblemShape shape_;
  SeparableSpec spec_;
};

/// Mean loss over a set of evaluators sharing one shape. Stands in for the
/// pooled training data of the centralized baseline.
class PooledEvaluator final : public Evaluator {
 public:
  explicit PooledEvaluator(std::vector<std::shared_ptr<Evaluator>> parts);

  const ProblemShape& shape() const override { return parts_.front()->shape(); }
  double evaluate(const DiscreteAssignment& a) override;
  std::vector<double> evaluate_batch(
      std::span<const DiscreteAssignment> batch) override;
  bool is_pure() const override;
  std::optional<double> expected_loss(const Policy& policy) const override;

 private:
  std::vector<std::shared_ptr<Evaluator>> parts_;
};

std::unique_ptr<Evaluator> make_evaluator(const ProblemShape& shape,
                                          const EvaluatorSpec& spec);

/// Checked evaluation: validates the assignment and the returned loss.
double evaluate(Evaluator& evaluator, const DiscreteAssignment& a);

// ---------------------------------------------------------------------------
// Enumeration oracles

/// Calls fn(assignment) for every assignment in table order.
void for_each_assignment(const ProblemShape& shape,
                         const std::function<void(const DiscreteAssignment&)>& fn);

double exact_expected_loss(const Policy& policy, Evaluator& evaluator);

struct Gradients {
  std::vector<Vec> p;  // M x N
  std::vector<Vec> q;  // U x V
};

/// d E / d p_{i,j} with p treated as free coordinates of the product measure.
Gradients exact_gradients(const Policy& policy, Evaluator& evaluator);

struct OptimumReport {
  DiscreteAssignment assignment;
  double loss = 0.0;
};

/// Lowest-loss assignment; ties go to the first in table order.
OptimumReport enumerate_optimum(Evaluator& evaluator);

// ---------------------------------------------------------------------------
// Score-function estimator

struct ReinforceOptions {
  std::size_t samples = 8;
  bool baseline = true;
  double p_min = 1e-6;
  bool keep_samples = false;
};

struct ReinforceResult {
  Gradients grad;
  double mean_loss = 0.0;
  /// Filled when keep_samples is set: the draws, and the centred weight
  /// (loss minus baseline) each draw contributed.
  std::vector<LossSample> samples;
  Vec weights;
};

/// Sample-mean estimate of the gradient of E[loss]. Each draw s adds
/// (L_s - b_s) e_{j_i} / max(p_{i,j_i}, p_min) to grad.p[i] and likewise for
/// the demo slots. With the baseline on, b_s is the mean loss of the other
/// draws in the batch. The expectation is then shifted by E[L] on every
/// coordinate of a slot, which the simplex projection ignores. With it off
/// the estimate is unbiased.
/// With `fixed_demos` set, demos are held at that realization and grad.q is
/// left zero.
ReinforceResult reinforce_gradients(
    const Policy& policy, Evaluator& evaluator, const ReinforceOptions& opts,
    Rng& rng, const std::vector<std::uint32_t>* fixed_demos = nullptr);

/// Draws one assignment from the product distribution.
DiscreteAssignment sample_assignment(const Policy& policy, Rng& rng);

}  // namespace asyndbt
