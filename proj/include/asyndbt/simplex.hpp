// Copyright 2026 The AsynDBT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "asyndbt/rng.hpp"

namespace asyndbt {

using Vec = std::vector<double>;

inline constexpr double kSimplexSumTol = 1e-9;
inline constexpr double kRootTol = 1e-10;

/// A point on the probability simplex. Construction validates; the only
/// unchecked way in is through the projection.
class ProbVector {
 public:
  ProbVector() = default;
  explicit ProbVector(Vec entries);

  static ProbVector uniform(std::size_t n);
  static ProbVector one_hot(std::size_t n, std::size_t index);
  /// Flat Dirichlet draw.
  static ProbVector random(std::size_t n, Rng& rng);

  std::size_t size() const noexcept { return entries_.size(); }
  double operator[](std::size_t i) const { return entries_[i]; }
  std::span<const double> values() const noexcept { return entries_; }
  const Vec& vec() const noexcept { return entries_; }

  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }

  friend bool operator==(const ProbVector&, const ProbVector&) = default;

 private:
  struct Trusted {};
  ProbVector(Vec entries, Trusted) : entries_(std::move(entries)) {}
  friend ProbVector project_to_simplex(std::span<const double> x);

  Vec entries_;
};

/// Componentwise sign with sign(0) = 0.
class SignVector {
 public:
  SignVector() = default;
  explicit SignVector(std::vector<std::int8_t> entries);

  std::size_t size() const noexcept { return entries_.size(); }
  int operator[](std::size_t i) const { return entries_[i]; }
  std::span<const std::int8_t> values() const noexcept { return entries_; }

  friend bool operator==(const SignVector&, const SignVector&) = default;

 private:
  std::vector<std::int8_t> entries_;
};

bool is_on_simplex(std::span<const double> x, double tol = kSimplexSumTol);

/// Euclidean projection onto {x : 0 <= x <= 1, 1'x = 1}, computed as
/// clip(x - v*, 0, 1) with v* the exact root of the piecewise-linear
/// s(v) = sum clip(x - v, 0, 1) - 1 (breakpoints at x_j and x_j - 1).
ProbVector project_to_simplex(std::span<const double> x);

/// The threshold v* used by project_to_simplex.
double simplex_threshold(std::span<const double> x);

/// Inverse-CDF draw over entries in storage order.
std::size_t sample_categorical(const ProbVector& p, Rng& rng);

double l1_distance(std::span<const double> x, std::span<const double> y);

SignVector sign_subgradient(std::span<const double> x);

/// clamp(lambda, 0, lambda_max).
double project_dual(double lambda, double lambda_max);

std::size_t argmax_lowest(std::span<const double> x);

}  // namespace asyndbt
