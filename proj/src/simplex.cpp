// Copyright 2026 The AsynDBT Authors
// SPDX-License-Identifier: Apache-2.0

#include "asyndbt/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "asyndbt/error.hpp"

namespace asyndbt {

namespace {

void check_finite(std::span<const double> x) {
  require(!x.empty(), ErrorCode::kInvalidArgument, "empty vector");
  for (double v : x)
    require(std::isfinite(v), ErrorCode::kInvalidArgument,
            "non-finite entry");
}

double clip01(double v) { return std::min(1.0, std::max(0.0, v)); }

double threshold_residual(std::span<const double> x, double v) {
  double s = -1.0;
  for (double xi : x) s += clip01(xi - v);
  return s;
}

}  // namespace

bool is_on_simplex(std::span<const double> x, double tol) {
  if (x.empty()) return false;
  double sum = 0.0;
  for (double v : x) {
    if (!(v >= 0.0 && v <= 1.0)) return false;
    sum += v;
  }
  return std::abs(sum - 1.0) <= tol;
}

ProbVector::ProbVector(Vec entries) : entries_(std::move(entries)) {
  require(is_on_simplex(entries_), ErrorCode::kInvalidArgument,
          "not a probability vector");
}

ProbVector ProbVector::uniform(std::size_t n) {
  require(n > 0, ErrorCode::kInvalidArgument, "empty distribution");
  return ProbVector(Vec(n, 1.0 / static_cast<double>(n)), Trusted{});
}

ProbVector ProbVector::one_hot(std::size_t n, std::size_t index) {
  require(index < n, ErrorCode::kInvalidArgument, "one-hot index out of range");
  Vec e(n, 0.0);
  e[index] = 1.0;
  return ProbVector(std::move(e), Trusted{});
}

ProbVector ProbVector::random(std::size_t n, Rng& rng) {
  require(n > 0, ErrorCode::kInvalidArgument, "empty distribution");
  Vec e(n);
  double sum = 0.0;
  for (auto& v : e) sum += (v = rng.exponential());
  for (auto& v : e) v /= sum;
  return project_to_simplex(e);
}

SignVector::SignVector(std::vector<std::int8_t> entries)
    : entries_(std::move(entries)) {
  for (auto s : entries_)
    require(s >= -1 && s <= 1, ErrorCode::kInvalidArgument,
            "sign entry outside {-1, 0, 1}");
}

double simplex_threshold(std::span<const double> x) {
  check_finite(x);
  // s(v) is continuous, nonincreasing and piecewise linear. Sweep the
  // breakpoints from the top; between consecutive breakpoints
  // s(v) = sum_active - n_active * v + n_capped - 1.
  struct Breakpoint {
    double at;
    bool upper;  // at = x_j: j turns active when v drops below
                 // at = x_j - 1: j turns capped when v drops below
  };
  std::vector<Breakpoint> bps;
  bps.reserve(2 * x.size());
  for (double xi : x) {
    bps.push_back({xi, true});
    bps.push_back({xi - 1.0, false});
  }
  std::sort(bps.begin(), bps.end(), [](const Breakpoint& a, const Breakpoint& b) {
    if (a.at != b.at) return a.at > b.at;
    return a.upper > b.upper;
  });

  double sum_active = 0.0;
  std::size_t n_active = 0;
  std::size_t n_capped = 0;
  for (const auto& bp : bps) {
    const double s_at = sum_active - static_cast<double>(n_active) * bp.at +
                        static_cast<double>(n_capped) - 1.0;
    if (s_at >= 0.0) {
      // Root lies in [bp.at, previous breakpoint].
      if (n_active == 0) return bp.at;
      return (sum_active + static_cast<double>(n_capped) - 1.0) /
             static_cast<double>(n_active);
    }
    if (bp.upper) {
      sum_active += bp.at;
      ++n_active;
    } else {
      sum_active -= bp.at + 1.0;
      --n_active;
      ++n_capped;
    }
  }
  // All entries capped: s = n - 1 >= 0 below the lowest breakpoint.
  return bps.back().at;
}

ProbVector project_to_simplex(std::span<const double> x) {
  check_finite(x);
  // Points already on the simplex are returned untouched so the projection is
  // exactly idempotent.
  if (is_on_simplex(x, 1e-12))
    return ProbVector(Vec(x.begin(), x.end()), ProbVector::Trusted{});

  const double v = simplex_threshold(x);
  const double residual = threshold_residual(x, v);
  require(std::abs(residual) <= kRootTol,
          ErrorCode::kInvariant,
          "simplex threshold residual " + std::to_string(residual));
  Vec out(x.size());
  std::transform(x.begin(), x.end(), out.begin(),
                 [v](double xi) { return clip01(xi - v); });
  return ProbVector(std::move(out), ProbVector::Trusted{});
}

std::size_t sample_categorical(const ProbVector& p, Rng& rng) {
  const double u = rng.uniform();
  double cum = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    cum += p[i];
    last_positive = i;
    if (u < cum) return i;
  }
  // u landed in the rounding gap above the final cumulative sum.
  return last_positive;
}

double l1_distance(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), ErrorCode::kInvalidArgument,
          "l1_distance: length mismatch");
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) d += std::abs(x[i] - y[i]);
  return d;
}

SignVector sign_subgradient(std::span<const double> x) {
  std::vector<std::int8_t> s(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    s[i] = static_cast<std::int8_t>((x[i] > 0.0) - (x[i] < 0.0));
  return SignVector(std::move(s));
}

double project_dual(double lambda, double lambda_max) {
  require(lambda_max > 0.0, ErrorCode::kInvalidArgument,
          "lambda_max must be positive");
  if (std::isnan(lambda)) return 0.0;
  return std::clamp(lambda, 0.0, lambda_max);
}

std::size_t argmax_lowest(std::span<const double> x) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < x.size(); ++i)
    if (x[i] > x[best]) best = i;
  return best;
}

}  // namespace asyndbt
