// Copyright 2026 The AsynDBT Authors
// SPDX-License-Identifier: Apache-2.0

// Shared test fixtures built on the library types.

#pragma once

#include <vector>

#include "asyndbt/lower_solver.hpp"

namespace testing {

/// g_v(p) = sum_i |p_i - t_{v,i}|^2 with closed-form gradient and value.
class QuadraticSource final : public asyndbt::LowerGradSource {
 public:
  /// targets[v][i] is worker v's target for slot i.
  explicit QuadraticSource(std::vector<std::vector<asyndbt::Vec>> targets)
      : targets_(std::move(targets)) {}

  std::vector<asyndbt::Vec> grad(std::size_t v, const asyndbt::DemoChoice&,
                                 const std::vector<asyndbt::ProbVector>& p) override {
    std::vector<asyndbt::Vec> g(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      g[i].resize(p[i].size());
      for (std::size_t j = 0; j < p[i].size(); ++j) g[i][j] = 2.0 * (p[i][j] - targets_[v][i][j]);
    }
    return g;
  }

  std::optional<double> value(std::size_t v, const asyndbt::DemoChoice&,
                              const std::vector<asyndbt::ProbVector>& p) override {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
      for (std::size_t j = 0; j < p[i].size(); ++j) {
        const double d = p[i][j] - targets_[v][i][j];
        s += d * d;
      }
    return s;
  }

 private:
  std::vector<std::vector<asyndbt::Vec>> targets_;
};

/// One slot with `workers` uniform blocks, uniform z and zero duals.
inline asyndbt::LowerState uniform_lower_state(std::size_t workers, std::size_t n,
                                               std::size_t extra_senders = 0) {
  asyndbt::LowerState s{std::vector<asyndbt::ProbVector>(workers, asyndbt::ProbVector::uniform(n)),
                        std::vector<asyndbt::Vec>(extra_senders, asyndbt::ProbVector::uniform(n).vec()),
                        asyndbt::ProbVector::uniform(n),
                        std::vector<asyndbt::Vec>(workers, asyndbt::Vec(n, 0.0))};
  return s;
}

}  // namespace testing
