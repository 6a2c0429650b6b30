// Copyright 2026 The AsynDBT Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails. Traces go to argv[1] (default
// ./acceptance_traces).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "asyndbt/federated.hpp"
#include "asyndbt/harness.hpp"
#include "asyndbt/lower_solver.hpp"
#include "asyndbt/oracle.hpp"
#include "asyndbt/planes.hpp"
#include "asyndbt/simplex.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace asyndbt;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a = 0, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double linf(const Vec& x, const Vec& y) {
  double m = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) m = std::max(m, std::abs(x[j] - y[j]));
  return m;
}

fs::path g_traces;
std::vector<fs::path> g_written;

RunOutput run_and_save(const json& config, const std::string& name) {
  auto cfg = parse_config(config);
  cfg.output.dir = (g_traces / name).string();
  auto out = execute(cfg);
  write_outputs(cfg, out);
  g_written.push_back(fs::path(cfg.output.dir) / cfg.output.trace);
  return out;
}

// ---------------------------------------------------------------------------

Outcome simplex_projection() {
  Rng rng(2026);
  std::vector<Vec> inputs(10000);
  for (auto& x : inputs) {
    x.resize(2 + rng.below(255));
    for (auto& v : x) v = rng.uniform(-5.0, 5.0);
  }
  std::vector<ProbVector> first, second;
  first.reserve(inputs.size());
  second.reserve(inputs.size());
  const auto t0 = std::chrono::steady_clock::now();
  for (const auto& x : inputs) first.push_back(project_to_simplex(x));
  for (const auto& p : first) second.push_back(project_to_simplex(p.values()));
  const double elapsed = seconds_since(t0);

  std::size_t bad = 0;
  double worst_sum = 0.0, worst_oracle = 0.0, worst_idem = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto& p = first[i].vec();
    double sum = 0.0;
    bool nonneg = true;
    for (double v : p) {
      sum += v;
      nonneg = nonneg && v >= 0.0;
    }
    worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
    worst_oracle = std::max(worst_oracle, linf(p, testing::bisection_projection(inputs[i])));
    worst_idem = std::max(worst_idem, linf(p, second[i].vec()));
    bad += !nonneg;
  }
  const bool pass = bad == 0 && worst_sum <= 1e-9 && worst_oracle <= 1e-8 &&
                    worst_idem <= 1e-9 && elapsed < 2.0;
  return {pass, fmt("sum err %.2e, vs bisection %.2e, idempotence %.2e", worst_sum,
                    worst_oracle, worst_idem) +
                    fmt(", negative %.0f, %.3f s", static_cast<double>(bad), elapsed)};
}

Outcome reinforce_unbiased() {
  const ProblemShape shape{2, 3, 1, 2};
  TableEvaluator ev(shape, random_table(shape, 7));
  constexpr std::size_t kDraws = 200000;
  constexpr double kPMin = 1e-6;
  int failures = 0, coords = 0;
  double worst_z = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    Policy policy;
    for (std::size_t i = 0; i < shape.M; ++i) policy.p.push_back(ProbVector::random(shape.N, rng));
    for (std::size_t u = 0; u < shape.U; ++u) policy.q.push_back(ProbVector::random(shape.V, rng));
    const auto exact = exact_gradients(policy, ev);
    const auto r = reinforce_gradients(policy, ev, {kDraws, false, kPMin, true}, rng);

    // Per-draw contributions L e_j / p_j give the mean and its standard error.
    auto check = [&](const std::vector<ProbVector>& dist, const std::vector<Vec>& want,
                     auto pick) {
      for (std::size_t i = 0; i < dist.size(); ++i)
        for (std::size_t j = 0; j < dist[i].size(); ++j) {
          double sum = 0.0, sq = 0.0;
          const double w = 1.0 / std::max(dist[i][j], kPMin);
          for (const auto& s : r.samples) {
            const double x = pick(s.assignment)[i] == j ? s.loss * w : 0.0;
            sum += x;
            sq += x * x;
          }
          const double n = static_cast<double>(r.samples.size());
          const double mean = sum / n;
          const double se = std::sqrt((sq / n - mean * mean) / n);
          const double z = std::abs(mean - want[i][j]) / se;
          worst_z = std::max(worst_z, z);
          failures += z > 3.0;
          ++coords;
        }
    };
    if (r.samples.size() != kDraws) return {false, "estimator did not keep every draw"};
    check(policy.p, exact.p, [](const DiscreteAssignment& a) { return a.tokens; });
    check(policy.q, exact.q, [](const DiscreteAssignment& a) { return a.demos; });
  }
  return {failures <= 1, fmt("%.0f of %.0f coordinates beyond 3 SE, largest %.2f SE",
                             failures, coords, worst_z)};
}

Outcome lower_solver() {
  Rng rng(17);
  double worst_res = 0.0, worst_z = 0.0, worst_rise = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t n = 3 + rng.below(6);
    Vec target(n);
    for (auto& t : target) t = rng.uniform(-0.5, 1.0);
    InnerConfig cfg;
    cfg.K = 500;
    testing::QuadraticSource src({{target}, {target}, {target}});
    const auto r = estimate_phi({{}, {}, {}}, {testing::uniform_lower_state(3, n)}, cfg, src);
    const auto& s = r.state[0];
    for (const auto& p : s.p) worst_res = std::max(worst_res, l1_distance(p.values(), s.z.values()));
    worst_z = std::max(worst_z, linf(s.z.vec(), testing::bisection_projection(target)));
    if (r.lagrangian_trace.size() != cfg.K) return {false, "Lagrangian trace missing"};
    for (std::size_t k = 11; k < r.lagrangian_trace.size(); ++k)
      worst_rise = std::max(worst_rise, r.lagrangian_trace[k] - r.lagrangian_trace[k - 1]);
  }
  return {worst_res <= 1e-3 && worst_z <= 1e-2 && worst_rise <= 1e-6,
          fmt("residual %.2e, z error %.2e, largest rise %.2e", worst_res, worst_z, worst_rise)};
}

StackedPoint random_point(Rng& rng, std::size_t blocks, std::size_t n) {
  StackedPoint x;
  for (std::size_t w = 0; w < blocks; ++w) x.p.push_back(ProbVector::random(n, rng).vec());
  x.z = ProbVector::random(n, rng).vec();
  return x;
}

// Moves each block of phi part of the way toward a random simplex point,
// splitting an L1 budget below eps across blocks.
StackedPoint feasible_point(const PhiEstimate& phi, double eps, Rng& rng) {
  const std::size_t blocks = phi.stacked.p.size() + 1;
  StackedPoint x = phi.stacked;
  const double budget = eps * rng.uniform(0.0, 1.0) / static_cast<double>(blocks);
  auto move = [&](Vec& b) {
    const auto target = ProbVector::random(b.size(), rng);
    const double d = l1_distance(b, target.values());
    if (d == 0.0) return;
    const double t = std::min(1.0, budget / d);
    for (std::size_t j = 0; j < b.size(); ++j) b[j] = (1 - t) * b[j] + t * target[j];
  };
  for (auto& b : x.p) move(b);
  move(x.z);
  return x;
}

Outcome cutting_planes() {
  Rng rng(44);
  const double eps = 0.05;
  std::size_t sep_fail = 0;
  double worst_feasible = -1e300;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t blocks = 1 + rng.below(4), n = 2 + rng.below(7);
    PhiEstimate phi{random_point(rng, blocks, n), std::vector<DemoChoice>(blocks), 1};
    StackedPoint x;
    do {
      x = random_point(rng, blocks, n);
    } while (h_value(phi.demos_used, x, phi) <= eps);
    const auto pl = generate_plane(phi, x, eps, 1, 0, 0);
    sep_fail += !(plane_value(pl, x) > 0.0);
    for (int s = 0; s < 1000; ++s) {
      const auto y = feasible_point(phi, eps, rng);
      if (h_value(phi.demos_used, y, phi) > eps) return {false, "sampler left the region"};
      worst_feasible = std::max(worst_feasible, plane_value(pl, y));
    }
  }

  const json config = {
      {"seed", 4},
      {"shape", {{"M", 2}, {"N", 4}, {"U", 1}, {"V", 2}}},
      {"evaluator", {{"kind", "separable"}, {"generate", {{"seed", 9}}}}},
      {"sim",
       {{"n_benign", 3},
        {"iterations", 100},
        {"delta", 10},
        {"prune", false},
        {"record_polyhedra", true},
        {"early_stop", {{"enabled", false}}}}}};
  const auto out = execute(parse_config(config)).result;
  const auto& hist = out.polyhedra_history;
  std::size_t violations = 0, planes = 0;
  Rng audit_rng(5);
  for (std::size_t i = 0; i < out.last_points.size(); ++i) {
    std::vector<Polyhedron> slot_hist;
    for (const auto& h : hist) slot_hist.push_back(h[i]);
    if (!slot_hist.empty()) planes += slot_hist.back().planes.size();
    const auto& anchor = out.last_points[i];
    violations += audit_nestedness(slot_hist, 1000, anchor.p.size(), anchor.z.size(), audit_rng,
                                   &anchor)
                      .violations;
  }
  const bool pass = sep_fail == 0 && worst_feasible <= 1e-9 && hist.size() == 10 &&
                    planes > 0 && violations == 0;
  return {pass, fmt("separation failures %.0f, max value on region %.2e", sep_fail,
                    worst_feasible) +
                    fmt(", %.0f checkpoints, %.0f planes, %.0f nesting violations",
                        hist.size(), planes, violations)};
}

Outcome sync_degeneration() {
  json config = {{"seed", 12},
                 {"shape", {{"M", 2}, {"N", 3}, {"U", 1}, {"V", 2}}},
                 {"evaluator", {{"kind", "separable"}, {"generate", {{"seed", 12}}}}},
                 {"sim",
                  {{"n_benign", 3},
                   {"n_byzantine", 0},
                   {"tau", 1},
                   {"iterations", 200},
                   {"reachability", {{"kind", "bernoulli"}, {"availability", 1.0}}},
                   {"early_stop", {{"enabled", false}}}}}};
  config["sim"]["scheduler"] = "async";
  const auto a = run_and_save(config, "c5_async").lines;
  config["sim"]["scheduler"] = "sync";
  const auto s = run_and_save(config, "c5_sync").lines;
  // Record 0 is the header, which names the scheduler.
  const bool same = a.size() == s.size() && std::equal(a.begin() + 1, a.end(), s.begin() + 1);
  return {same, fmt("%.0f vs %.0f records after the header", a.size() - 1.0, s.size() - 1.0)};
}

Outcome end_to_end() {
  int hits = 0;
  double worst_ratio = 0.0, worst_secs = 0.0;
  for (int seed = 1; seed <= 5; ++seed) {
    const json config = {
        {"seed", seed},
        {"shape", {{"M", 3}, {"N", 6}, {"U", 2}, {"V", 3}}},
        {"evaluator", {{"kind", "separable"}, {"generate", {{"seed", 100 + seed}}}}},
        {"sim", {{"n_benign", 3}, {"iterations", 2000}, {"early_stop", {{"enabled", false}}}}}};
    const auto t0 = std::chrono::steady_clock::now();
    const auto out = run_and_save(config, "c6_seed" + std::to_string(seed)).result;
    worst_secs = std::max(worst_secs, seconds_since(t0));

    const auto cfg = parse_config(config);
    auto ev = make_evaluator(cfg.shape, cfg.evaluators.front().resolve(cfg.shape));
    const auto opt = enumerate_optimum(*ev);
    bool all_decode = true;
    double loss = 0.0;
    for (const auto& w : out.workers) {
      all_decode = all_decode && decode_solution(w) == opt.assignment;
      loss += exact_expected_loss(w, *ev) / static_cast<double>(out.workers.size());
    }
    hits += all_decode;
    worst_ratio = std::max(worst_ratio, loss / opt.loss);
  }
  return {hits >= 4 && worst_ratio <= 1.05 && worst_secs < 60.0,
          fmt("%.0f/5 decode the optimum, worst loss ratio %.4f, slowest run %.2f s", hits,
              worst_ratio, worst_secs)};
}

Outcome straggler() {
  constexpr int kSyncIters = 200;
  std::vector<double> ratios;
  for (int seed = 1; seed <= 5; ++seed) {
    json config = {
        {"seed", seed},
        {"shape", {{"M", 3}, {"N", 6}, {"U", 2}, {"V", 3}}},
        {"evaluator", {{"kind", "separable"}, {"generate", {{"seed", 21}}}}},
        {"sim",
         {{"n_benign", 3},
          {"early_stop", {{"enabled", false}}},
          {"latency",
           {{"model", {{"kind", "constant"}, {"value", 1.0}}},
            {"per_worker", {{"2", {{"kind", "constant"}, {"value", 10.0}}}}}}}}}};
    config["sim"]["scheduler"] = "sync";
    config["sim"]["iterations"] = kSyncIters;
    const auto sync = run_and_save(config, "c7_sync_seed" + std::to_string(seed)).result;
    config["sim"]["scheduler"] = "async";
    config["sim"]["iterations"] = 10 * kSyncIters;
    const auto async = run_and_save(config, "c7_async_seed" + std::to_string(seed));
    double reach = -1.0;
    for (const auto& line : async.lines) {
      const auto r = json::parse(line);
      if (r.value("type", "") == "iter" && r["loss"].get<double>() <= sync.final_loss) {
        reach = r["clock"].get<double>();
        break;
      }
    }
    ratios.push_back(reach < 0.0 ? INFINITY : reach / sync.clock);
  }
  std::sort(ratios.begin(), ratios.end());
  return {ratios[2] <= 0.6, fmt("median clock ratio %.3f (range %.3f to %.3f)", ratios[2],
                                ratios.front(), ratios.back())};
}

Outcome byzantine() {
  auto deviation = [](const SimResult& a, const SimResult& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.z.size(); ++i) d += l1_distance(a.z[i].values(), b.z[i].values());
    return d;
  };
  std::vector<double> ratios;
  for (int seed = 1; seed <= 5; ++seed) {
    double dev[2];
    for (int k = 0; k < 2; ++k) {
      const double psi = k == 0 ? 0.0 : 0.01;
      json config = {{"seed", seed},
                     {"shape", {{"M", 3}, {"N", 6}, {"U", 2}, {"V", 3}}},
                     {"evaluator", {{"kind", "separable"}, {"generate", {{"seed", 21}}}}},
                     {"gradient", {{"estimator", "exact"}}},
                     {"upper", {{"psi", psi}}},
                     {"inner", {{"psi", psi}}},
                     {"sim",
                      {{"n_benign", 3}, {"iterations", 500}, {"early_stop", {{"enabled", false}}}}}};
      const std::string tag = "c8_seed" + std::to_string(seed) + (k ? "_psi" : "_nopsi");
      const auto clean = run_and_save(config, tag + "_clean").result;
      config["sim"]["n_byzantine"] = 1;
      config["sim"]["byzantine"] = json::array({{{"kind", "sign_flip"}}});
      const auto attacked = run_and_save(config, tag + "_attacked").result;
      dev[k] = deviation(attacked, clean);
    }
    ratios.push_back(dev[0] > 0.0 ? dev[1] / dev[0] : (dev[1] > 0.0 ? INFINITY : 0.0));
  }
  std::sort(ratios.begin(), ratios.end());
  return {ratios[2] <= 0.5, fmt("median deviation ratio %.3f (range %.3f to %.3f)", ratios[2],
                                ratios.front(), ratios.back())};
}

Outcome dual_regularization() {
  const ProblemShape shape{1, 3, 0, 1};
  std::vector<WorkerState> workers{WorkerState{0, Policy::uniform(shape), 0, Rng(1)},
                                   WorkerState{1, Policy::uniform(shape), 0, Rng(2)}};
  UpperConfig up;
  up.c1 = 0.5;
  const double gamma = 1e-3, lambda0 = 1.0;
  const std::size_t delta = 10;
  auto s = ServerState::initial(shape, 2, 0.05, workers);
  CuttingPlane pl;
  pl.id = 1;
  pl.a.assign(2, Vec(3, 0.0));
  pl.b.assign(3, 0.0);
  pl.dual = lambda0;
  s.polyhedra[0].planes.push_back(pl);

  const double rate = 1.0 - up.eta_lambda * up.c1;
  std::size_t predicted = 0;
  while (lambda0 * std::pow(rate, static_cast<double>(predicted)) >= gamma) ++predicted;
  // Checkpoints at multiples of delta; the plane goes at the second one whose
  // sample is below gamma.
  const std::size_t first_low = (predicted + delta - 1) / delta * delta;
  const std::size_t expected_removal = first_low + delta;

  DualWindow window;
  double worst = 0.0;
  std::size_t below_at = 0, removed_at = 0;
  for (std::size_t t = 1; t <= expected_removal + 3 * delta && removed_at == 0; ++t) {
    server_step(s, {}, up);
    const double dual = s.polyhedra[0].planes.front().dual;
    worst = std::max(worst, std::abs(dual - lambda0 * std::pow(rate, static_cast<double>(t))));
    if (below_at == 0 && dual < gamma) below_at = t;
    if (t % delta == 0) {
      window.record(s.polyhedra);
      if (!prune(s.polyhedra, gamma, window).empty()) removed_at = t;
    }
  }
  const bool pass = worst <= 1e-9 && below_at == predicted && removed_at == expected_removal;
  return {pass, fmt("envelope error %.2e, below gamma at step %.0f (predicted %.0f)", worst,
                    below_at, predicted) +
                    fmt(", removed at step %.0f (expected %.0f)", removed_at, expected_removal)};
}

Outcome replay_all() {
  std::size_t ok = 0;
  std::string bad;
  for (const auto& path : g_written) {
    const auto rep = replay_trace(path.string());
    if (rep.identical) {
      ++ok;
    } else if (bad.empty()) {
      bad = ", first mismatch in " + path.string();
    }
  }
  return {!g_written.empty() && ok == g_written.size(),
          fmt("%.0f of %.0f traces reproduce byte for byte", ok, g_written.size()) + bad};
}

}  // namespace

int main(int argc, char** argv) {
  g_traces = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_traces");
  fs::create_directories(g_traces);

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"simplex projection", simplex_projection},
      {"REINFORCE unbiasedness", reinforce_unbiased},
      {"lower-level solver", lower_solver},
      {"cutting planes", cutting_planes},
      {"sync degeneration", sync_degeneration},
      {"end-to-end optimization", end_to_end},
      {"straggler benefit", straggler},
      {"Byzantine robustness", byzantine},
      {"dual regularization", dual_regularization},
      {"replay", replay_all},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %2zu %-24s %s  %s (%.1f s)\n", i + 1, criteria[i].first,
                o.pass ? "PASS" : "FAIL", o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
