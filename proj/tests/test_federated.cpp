// Copyright 2026 The AsynDBT Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "asyndbt/error.hpp"
#include "asyndbt/federated.hpp"

using namespace asyndbt;

namespace {

WorkerState make_worker(std::size_t id, const ProblemShape& shape, std::uint64_t seed = 1) {
  return WorkerState{id, Policy::uniform(shape), 0, Rng(seed)};
}

ServerSnapshot uniform_snapshot(const ProblemShape& shape,
                                std::shared_ptr<const PolyhedronSet> planes = nullptr) {
  return ServerSnapshot{0, std::vector<ProbVector>(shape.M, ProbVector::uniform(shape.N)),
                        std::move(planes)};
}

GradientConfig exact() {
  GradientConfig g;
  g.estimator = GradientEstimator::kExact;
  return g;
}

CuttingPlane zero_plane(std::uint64_t id, std::size_t workers, std::size_t n) {
  CuttingPlane pl;
  pl.id = id;
  pl.a.assign(workers, Vec(n, 0.0));
  pl.b.assign(n, 0.0);
  return pl;
}

}  // namespace

TEST_CASE("worker_step with flat gradients and no planes keeps the state") {
  const ProblemShape shape{2, 3, 1, 2};
  TableEvaluator ev(shape, TableSpec{Vec(18, 0.4)});
  auto w = make_worker(0, shape);
  w.policy.p[0] = ProbVector(Vec{0.2, 0.5, 0.3});
  const auto r = worker_step(w, uniform_snapshot(shape), UpperConfig{}, exact(), ev, 3);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(r.state.policy.p[i][j] == doctest::Approx(w.policy.p[i][j]).epsilon(1e-14));
  CHECK(r.state.policy.q[0][0] == doctest::Approx(0.5));
  CHECK(r.msg.iteration == 3);
  CHECK(r.msg.mean_loss == doctest::Approx(0.4));
  CHECK(r.msg.p[0] == r.state.policy.p[0].vec());
}

TEST_CASE("worker_step applies the plane dual to its own block") {
  const ProblemShape shape{1, 3, 0, 1};
  TableEvaluator ev(shape, TableSpec{Vec(3, 0.0)});
  const double lambda = 2.0;
  UpperConfig up;
  auto planes = std::make_shared<PolyhedronSet>(1);
  auto pl = zero_plane(1, 2, 3);
  pl.a[1] = Vec{1, 0, 0};
  pl.dual = lambda;
  (*planes)[0].planes.push_back(pl);
  const auto w = make_worker(1, shape);
  const auto r = worker_step(w, uniform_snapshot(shape, planes), up, exact(), ev, 0);
  // The raw step lowers entry 0 by eta_p * lambda; projection shifts all
  // entries equally, preserving the gap.
  CHECK(r.state.policy.p[0][1] - r.state.policy.p[0][0] == doctest::Approx(up.eta_p * lambda));
  CHECK(r.state.policy.p[0][1] == doctest::Approx(r.state.policy.p[0][2]));
  // Worker 0 has a zero block in the same plane.
  const auto r0 = worker_step(make_worker(0, shape), uniform_snapshot(shape, planes), up, exact(), ev, 0);
  CHECK(r0.state.policy.p[0][0] == doctest::Approx(1.0 / 3));
}

TEST_CASE("worker_step sign term pulls p toward z") {
  const ProblemShape shape{1, 2, 0, 1};
  TableEvaluator ev(shape, TableSpec{Vec(2, 0.0)});
  UpperConfig up;
  up.psi = 1.0;
  auto w = make_worker(0, shape);
  w.policy.p[0] = ProbVector(Vec{0.8, 0.2});
  const auto r = worker_step(w, uniform_snapshot(shape), up, exact(), ev, 0);
  CHECK(r.state.policy.p[0][0] == doctest::Approx(0.8 - up.eta_p));
}

TEST_CASE("single worker gradient descent decreases the loss monotonically") {
  const ProblemShape shape{2, 4, 1, 3};
  SeparableEvaluator ev(shape, random_separable(shape, 5));
  auto w = make_worker(0, shape);
  const auto opt = ev.known_optimum();
  REQUIRE(opt.has_value());
  double prev = exact_expected_loss(w.policy, ev);
  std::vector<double> mass;
  for (int k = 0; k < 500; ++k) {
    w = worker_step(w, uniform_snapshot(shape), UpperConfig{}, exact(), ev, k).state;
    const double loss = exact_expected_loss(w.policy, ev);
    REQUIRE(loss <= prev + 1e-9);
    prev = loss;
    mass.push_back(w.policy.p[0][opt->tokens[0]]);
  }
  for (std::size_t k = 51; k < mass.size(); ++k) REQUIRE(mass[k] >= mass[k - 1]);
  CHECK(decode_solution(w.policy) == *opt);
}

TEST_CASE("stale recomputation reproduces the message bit for bit") {
  const ProblemShape shape{2, 3, 1, 2};
  TableEvaluator ev(shape, random_table(shape, 3));
  auto w = make_worker(0, shape, 99);
  auto planes = std::make_shared<PolyhedronSet>(2);
  auto pl = zero_plane(1, 1, 3);
  pl.a[0] = Vec{1, -1, 0};
  pl.dual = 0.3;
  (*planes)[1].planes.push_back(pl);
  const auto snap = uniform_snapshot(shape, planes);
  GradientConfig g;  // sampled gradients
  const auto a = worker_step(w, snap, UpperConfig{}, g, ev, 4);
  const auto b = worker_step(w, snap, UpperConfig{}, g, ev, 4);
  CHECK(a.msg.p == b.msg.p);
  CHECK(a.msg.q == b.msg.q);
  CHECK(a.msg.mean_loss == b.msg.mean_loss);
  // The input state is untouched; its stream has not advanced.
  CHECK(w.rng.next() == Rng(99).next());
}

TEST_CASE("server_step") {
  const ProblemShape shape{1, 3, 0, 1};
  std::vector<WorkerState> workers{make_worker(0, shape), make_worker(1, shape)};
  UpperConfig up;

  SUBCASE("consensus without planes keeps z for any psi") {
    up.psi = 5.0;
    auto s = ServerState::initial(shape, 2, 0.05, workers);
    const auto z = s.z[0].vec();
    server_step(s, {WorkerUpdateMsg{0, 0, {z}, {}, 0.0}}, up);
    CHECK(s.z[0].vec() == z);
    CHECK(s.iteration == 1);
  }
  SUBCASE("violated plane raises its dual") {
    up.c1 = 0.0;
    auto s = ServerState::initial(shape, 2, 0.05, workers);
    auto pl = zero_plane(1, 2, 3);
    pl.c = 0.25;
    s.polyhedra[0].planes.push_back(pl);
    server_step(s, {}, up);
    CHECK(s.polyhedra[0].planes[0].dual == doctest::Approx(up.eta_lambda * 0.25));
  }
  SUBCASE("satisfied-at-zero plane decays by the regularizer") {
    up.c1 = 0.5;
    auto s = ServerState::initial(shape, 2, 0.05, workers);
    auto pl = zero_plane(1, 2, 3);
    pl.dual = 2.0;
    s.polyhedra[0].planes.push_back(pl);
    server_step(s, {}, up);
    CHECK(s.polyhedra[0].planes[0].dual == doctest::Approx(2.0 * (1 - up.eta_lambda * up.c1)));
  }
  SUBCASE("plane b moves z against the dual") {
    auto s = ServerState::initial(shape, 2, 0.05, workers);
    auto pl = zero_plane(1, 2, 3);
    pl.b = Vec{1, 0, 0};
    pl.dual = 1.0;
    pl.c = -10.0;
    s.polyhedra[0].planes.push_back(pl);
    server_step(s, {}, up);
    CHECK(s.z[0][1] - s.z[0][0] == doctest::Approx(up.eta_z));
  }
  SUBCASE("duals stay within [0, lambda_max]") {
    up.lambda_max = 1.0;
    up.eta_lambda = 10.0;
    auto s = ServerState::initial(shape, 2, 0.05, workers);
    auto hi = zero_plane(1, 2, 3);
    hi.c = 5.0;
    auto lo = zero_plane(2, 2, 3);
    lo.c = -5.0;
    lo.dual = 0.5;
    s.polyhedra[0].planes = {hi, lo};
    server_step(s, {}, up);
    CHECK(s.polyhedra[0].planes[0].dual == 1.0);
    CHECK(s.polyhedra[0].planes[1].dual == 0.0);
  }
  SUBCASE("arbitrary vectors are clamped on receipt") {
    auto s = ServerState::initial(shape, 2, 0.05, workers);
    server_step(s, {WorkerUpdateMsg{1, 0, {Vec{7.0, -2.0, NAN}}, {}, 0.0}}, up);
    CHECK(s.last_p[1][0] == Vec{1.0, 0.0, 0.0});
    CHECK(is_on_simplex(s.z[0].values()));
  }
  SUBCASE("bad updates are rejected") {
    auto s = ServerState::initial(shape, 2, 0.05, workers);
    CHECK_THROWS_AS(server_step(s, {WorkerUpdateMsg{5, 0, {Vec(3, 0.3)}, {}, 0.0}}, up), Error);
    CHECK_THROWS_AS(server_step(s, {WorkerUpdateMsg{0, 0, {Vec(2, 0.5)}, {}, 0.0}}, up), Error);
  }
}

TEST_CASE("decode_solution") {
  Policy p{{ProbVector::one_hot(4, 2), ProbVector::uniform(3)}, {ProbVector::one_hot(2, 1)}};
  const auto a = decode_solution(p);
  CHECK(a.tokens == std::vector<std::uint32_t>{2, 0});
  CHECK(a.demos == std::vector<std::uint32_t>{1});
}

TEST_CASE("trained tiny instances decode to the enumerated optimum") {
  const ProblemShape shape{2, 3, 1, 2};
  int hits = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    TableEvaluator ev(shape, random_table(shape, seed));
    auto w = make_worker(0, shape, seed);
    UpperConfig up;
    up.eta_p = up.eta_q = 0.05;
    for (int k = 0; k < 2000; ++k)
      w = worker_step(w, uniform_snapshot(shape), up, exact(), ev, k).state;
    hits += decode_solution(w.policy) == enumerate_optimum(ev).assignment;
  }
  CHECK(hits >= 4);
}

TEST_CASE("config validation") {
  UpperConfig up;
  CHECK_NOTHROW(up.validate());
  up.c1 = -1;
  CHECK_THROWS_AS(up.validate(), Error);
  GradientConfig g;
  g.samples = 0;
  CHECK_THROWS_AS(g.validate(), Error);
}
