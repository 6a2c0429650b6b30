// Copyright 2026 The AsynDBT Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "asyndbt/error.hpp"
#include "asyndbt/simplex.hpp"
#include "oracles.hpp"

using namespace asyndbt;

TEST_CASE("project_to_simplex examples") {
  SUBCASE("point already on the simplex is returned as is") {
    const Vec x{0.2, 0.3, 0.5};
    CHECK(project_to_simplex(x).vec() == x);
  }
  SUBCASE("cap forces the clipped corner") {
    const auto p = project_to_simplex(Vec{5.0, -3.0});
    CHECK(p[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(p[1] == doctest::Approx(0.0));
  }
  SUBCASE("threshold 0.35") {
    const Vec x{0.9, 0.8, 0.1};
    CHECK(simplex_threshold(x) == doctest::Approx(0.35).epsilon(1e-14));
    const auto p = project_to_simplex(x);
    CHECK(p[0] == doctest::Approx(0.55).epsilon(1e-14));
    CHECK(p[1] == doctest::Approx(0.45).epsilon(1e-14));
    CHECK(p[2] == 0.0);
  }
}

TEST_CASE("project_to_simplex rejects bad input") {
  CHECK_THROWS_AS(project_to_simplex(Vec{}), Error);
  CHECK_THROWS_AS(project_to_simplex(Vec{1.0, NAN}), Error);
  CHECK_THROWS_AS(project_to_simplex(Vec{INFINITY, 0.0}), Error);
}

TEST_CASE("projection of a single entry is 1") {
  CHECK(project_to_simplex(Vec{-7.0}).vec() == Vec{1.0});
  CHECK(project_to_simplex(Vec{42.0}).vec() == Vec{1.0});
}

TEST_CASE("projection properties on random inputs") {
  Rng rng(11);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 2 + rng.below(255);
    Vec x(n);
    for (auto& v : x) v = rng.uniform(-5.0, 5.0);
    const auto p = project_to_simplex(x);
    REQUIRE(is_on_simplex(p.values()));
    // Idempotence is exact.
    REQUIRE(project_to_simplex(p.values()).vec() == p.vec());
    // Agreement with the bisection oracle.
    const auto ref = testing::bisection_projection(x);
    for (std::size_t j = 0; j < n; ++j) REQUIRE(std::abs(p[j] - ref[j]) <= 1e-9);
  }
}

TEST_CASE("projection is the nearest simplex point") {
  Rng rng(5);
  for (int batch = 0; batch < 50; ++batch) {
    const std::size_t n = 2 + rng.below(255);
    Vec x(n);
    for (auto& v : x) v = rng.uniform(-5.0, 5.0);
    const auto p = project_to_simplex(x);
    double dp = 0.0;
    for (std::size_t j = 0; j < n; ++j) dp += (p[j] - x[j]) * (p[j] - x[j]);
    for (int s = 0; s < 100; ++s) {
      const auto q = ProbVector::random(n, rng);
      double dq = 0.0;
      for (std::size_t j = 0; j < n; ++j) dq += (q[j] - x[j]) * (q[j] - x[j]);
      REQUIRE(std::sqrt(dp) <= std::sqrt(dq) + 1e-8);
    }
  }
}

TEST_CASE("entries above one are handled by the upper cap") {
  const Vec x{3.0, 2.5, -1.0, 0.0};
  const auto p = project_to_simplex(x);
  const auto ref = testing::bisection_projection(x);
  for (std::size_t j = 0; j < x.size(); ++j) CHECK(p[j] == doctest::Approx(ref[j]).epsilon(1e-12));
  CHECK(p[0] == doctest::Approx(0.75));
  CHECK(p[1] == doctest::Approx(0.25));
}

TEST_CASE("ProbVector validation") {
  CHECK_NOTHROW(ProbVector(Vec{0.5, 0.5}));
  CHECK_THROWS_AS(ProbVector(Vec{0.6, 0.6}), Error);
  CHECK_THROWS_AS(ProbVector(Vec{1.5, -0.5}), Error);
  CHECK_THROWS_AS(ProbVector(Vec{}), Error);
  CHECK(ProbVector::uniform(4)[3] == 0.25);
  CHECK(ProbVector::one_hot(3, 2).vec() == Vec{0, 0, 1});
  Rng rng(3);
  CHECK(is_on_simplex(ProbVector::random(17, rng).values()));
}

TEST_CASE("sample_categorical") {
  Rng rng(1);
  SUBCASE("degenerate distributions") {
    for (int i = 0; i < 1000; ++i) {
      REQUIRE(sample_categorical(ProbVector(Vec{1, 0, 0}), rng) == 0);
      REQUIRE(sample_categorical(ProbVector(Vec{0, 0, 1}), rng) == 2);
    }
  }
  SUBCASE("fair coin frequency") {
    const ProbVector p(Vec{0.5, 0.5});
    int zeros = 0;
    for (int i = 0; i < 100000; ++i) zeros += sample_categorical(p, rng) == 0;
    CHECK(zeros / 1e5 >= 0.49);
    CHECK(zeros / 1e5 <= 0.51);
  }
  SUBCASE("chi-square goodness of fit") {
    Rng gen(99);
    for (int t = 0; t < 10; ++t) {
      const std::size_t n = 2 + gen.below(9);
      const auto p = ProbVector::random(n, gen);
      std::vector<double> counts(n, 0.0);
      const int draws = 100000;
      for (int i = 0; i < draws; ++i) counts[sample_categorical(p, rng)] += 1.0;
      double stat = 0.0;
      std::size_t dof = 0;
      for (std::size_t j = 0; j < n; ++j) {
        const double e = draws * p[j];
        if (e < 5.0) continue;
        stat += (counts[j] - e) * (counts[j] - e) / e;
        ++dof;
      }
      REQUIRE(dof >= 2);
      CHECK(stat < testing::chi_square_critical_001(dof - 1));
    }
  }
}

TEST_CASE("l1_distance") {
  CHECK(l1_distance(Vec{0.1, 0.9}, Vec{0.1, 0.9}) == 0.0);
  CHECK(l1_distance(Vec{1, 0}, Vec{0, 1}) == 2.0);
  CHECK(l1_distance(Vec{0.2, 0.8}, Vec{0.5, 0.5}) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK_THROWS_AS(l1_distance(Vec{1}, Vec{1, 2}), Error);
}

TEST_CASE("sign_subgradient") {
  const auto s = sign_subgradient(Vec{0.3, -0.1, 0.0});
  CHECK(s[0] == 1);
  CHECK(s[1] == -1);
  CHECK(s[2] == 0);
  const auto z = sign_subgradient(Vec(5, 0.0));
  for (std::size_t i = 0; i < 5; ++i) CHECK(z[i] == 0);
  const Vec phi{0.2, 0.3, 0.5};
  Vec diff(3);
  for (std::size_t i = 0; i < 3; ++i) diff[i] = (phi[i] + 0.1) - phi[i];
  const auto one = sign_subgradient(diff);
  for (std::size_t i = 0; i < 3; ++i) CHECK(one[i] == 1);
  CHECK_THROWS_AS(SignVector(std::vector<std::int8_t>{2}), Error);
}

TEST_CASE("project_dual") {
  CHECK(project_dual(-0.5, 10) == 0.0);
  CHECK(project_dual(3, 10) == 3.0);
  CHECK(project_dual(12, 10) == 10.0);
  CHECK_THROWS_AS(project_dual(1, 0), Error);
  CHECK_THROWS_AS(project_dual(1, -1), Error);
}

TEST_CASE("argmax_lowest breaks ties low") {
  CHECK(argmax_lowest(Vec{0.25, 0.25, 0.25, 0.25}) == 0);
  CHECK(argmax_lowest(Vec{0.1, 0.45, 0.45}) == 1);
}
