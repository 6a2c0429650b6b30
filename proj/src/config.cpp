// Copyright 2026 The AsynDBT Authors
// SPDX-License-Identifier: Apache-2.0

#include "asyndbt/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "asyndbt/error.hpp"
#include "asyndbt/prompt.hpp"

namespace asyndbt {

using nlohmann::json;

namespace {

/// Reads fields from one JSON object and rejects keys nobody asked for.
class Obj {
 public:
  Obj(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    require(j_.is_object(), ErrorCode::kConfig, where_ + ": expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      fail(ErrorCode::kConfig, where_ + "." + key + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string path(const char* key) const { return where_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      (void)v;
      require(seen_.count(k) != 0, ErrorCode::kConfig, where_ + ": unknown key '" + k + "'");
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

json latency_json(const LatencyModel& m) {
  switch (m.kind) {
    case LatencyModel::Kind::kConstant: return {{"kind", "constant"}, {"value", m.value}};
    case LatencyModel::Kind::kUniform: return {{"kind", "uniform"}, {"lo", m.lo}, {"hi", m.hi}};
    case LatencyModel::Kind::kExponential:
      return {{"kind", "exponential"}, {"value", m.value}};
  }
  return {};
}

LatencyModel parse_latency(const json& j, const std::string& where) {
  Obj o(j, where);
  LatencyModel m;
  std::string kind = "constant";
  o.get("kind", kind);
  if (kind == "constant") {
    m.kind = LatencyModel::Kind::kConstant;
  } else if (kind == "uniform") {
    m.kind = LatencyModel::Kind::kUniform;
  } else if (kind == "exponential") {
    m.kind = LatencyModel::Kind::kExponential;
  } else {
    fail(ErrorCode::kConfig, where + ".kind: unknown latency model '" + kind + "'");
  }
  o.get("value", m.value);
  o.get("lo", m.lo);
  o.get("hi", m.hi);
  o.finish();
  return m;
}

/// Maps keyed by worker id are written as {"<id>": value}.
template <class T, class F>
json worker_map_json(const std::map<std::size_t, T>& m, F&& f) {
  json out = json::object();
  for (const auto& [k, v] : m) out[std::to_string(k)] = f(v);
  return out;
}

std::size_t worker_key(const std::string& k, const std::string& where) {
  try {
    std::size_t pos = 0;
    const auto v = std::stoull(k, &pos);
    if (pos == k.size()) return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
  }
  fail(ErrorCode::kConfig, where + ": worker keys must be integers, got '" + k + "'");
}

json sim_json(const SimConfig& s) {
  json reach{{"kind", s.reachability.kind == Reachability::Kind::kBernoulli ? "bernoulli"
                                                                             : "schedule"},
             {"availability", s.reachability.availability},
             {"per_worker", worker_map_json(s.reachability.per_worker,
                                            [](double p) { return json(p); })},
             {"schedule", s.reachability.schedule}};
  json byz = json::array();
  for (const auto& m : s.byzantine) byz.push_back({{"kind", to_string(m.kind)}, {"corner", m.corner}});
  return {{"n_benign", s.n_benign},
          {"n_byzantine", s.n_byzantine},
          {"tau", s.tau},
          {"delta", s.delta},
          {"gamma", s.gamma},
          {"epsilon", s.epsilon},
          {"max_planes", s.max_planes},
          {"prune", s.prune},
          {"reachability", reach},
          {"latency",
           {{"model", latency_json(s.latency.model)},
            {"per_worker", worker_map_json(s.latency.per_worker, latency_json)}}},
          {"byzantine", byz},
          {"early_stop",
           {{"enabled", s.early_stop.enabled},
            {"min_delta", s.early_stop.min_delta},
            {"patience", s.early_stop.patience}}},
          {"iterations", s.iterations},
          {"scheduler", to_string(s.scheduler)},
          {"phi_demos", to_string(s.phi_demos)},
          {"record_polyhedra", s.record_polyhedra}};
}

SimConfig parse_sim(const json& j) {
  Obj o(j, "sim");
  SimConfig s;
  o.get("n_benign", s.n_benign);
  o.get("n_byzantine", s.n_byzantine);
  o.get("tau", s.tau);
  o.get("delta", s.delta);
  o.get("gamma", s.gamma);
  o.get("epsilon", s.epsilon);
  o.get("max_planes", s.max_planes);
  o.get("prune", s.prune);
  o.get("iterations", s.iterations);
  o.get("record_polyhedra", s.record_polyhedra);
  std::string sched = to_string(s.scheduler), demos = to_string(s.phi_demos);
  o.get("scheduler", sched);
  o.get("phi_demos", demos);
  s.scheduler = parse_scheduler(sched);
  s.phi_demos = parse_phi_demos(demos);

  if (const auto* r = o.child("reachability")) {
    Obj ro(*r, "sim.reachability");
    std::string kind = "bernoulli";
    ro.get("kind", kind);
    if (kind == "bernoulli") {
      s.reachability.kind = Reachability::Kind::kBernoulli;
    } else if (kind == "schedule") {
      s.reachability.kind = Reachability::Kind::kSchedule;
    } else {
      fail(ErrorCode::kConfig, "sim.reachability.kind: unknown kind '" + kind + "'");
    }
    ro.get("availability", s.reachability.availability);
    ro.get("schedule", s.reachability.schedule);
    if (const auto* pw = ro.child("per_worker")) {
      Obj(*pw, "sim.reachability.per_worker");  // type check
      for (const auto& [k, v] : pw->items()) {
        require(v.is_number(), ErrorCode::kConfig,
                "sim.reachability.per_worker: values must be numbers");
        s.reachability.per_worker[worker_key(k, "sim.reachability.per_worker")] = v.get<double>();
      }
    }
    ro.finish();
  }
  if (const auto* l = o.child("latency")) {
    Obj lo(*l, "sim.latency");
    if (const auto* m = lo.child("model")) s.latency.model = parse_latency(*m, "sim.latency.model");
    if (const auto* pw = lo.child("per_worker")) {
      Obj(*pw, "sim.latency.per_worker");
      for (const auto& [k, v] : pw->items())
        s.latency.per_worker[worker_key(k, "sim.latency.per_worker")] =
            parse_latency(v, "sim.latency.per_worker." + k);
    }
    lo.finish();
  }
  if (const auto* b = o.child("byzantine")) {
    require(b->is_array(), ErrorCode::kConfig, "sim.byzantine: expected an array");
    for (const auto& e : *b) {
      Obj bo(e, "sim.byzantine[]");
      std::string kind = "sign_flip";
      ByzantineMode m;
      bo.get("kind", kind);
      bo.get("corner", m.corner);
      m.kind = parse_byzantine(kind);
      bo.finish();
      s.byzantine.push_back(m);
    }
  }
  if (const auto* e = o.child("early_stop")) {
    Obj eo(*e, "sim.early_stop");
    eo.get("enabled", s.early_stop.enabled);
    eo.get("min_delta", s.early_stop.min_delta);
    eo.get("patience", s.early_stop.patience);
    eo.finish();
  }
  o.finish();
  return s;
}

json evaluator_json(const EvaluatorConfig& e) {
  json j{{"kind", e.kind}};
  if (e.kind == "remote") {
    j["endpoint"] = e.remote.endpoint;
    j["timeout_s"] = e.remote.timeout_s;
    j["template"] = e.remote.prompt_template;
    j["vocab"] = e.remote.vocab;
    j["corpus"] = e.remote.corpus_path;
    return j;
  }
  if (e.generate) {
    j["generate"] = {{"seed", e.generate->seed}, {"lo", e.generate->lo}, {"hi", e.generate->hi}};
    return j;
  }
  if (e.kind == "table") {
    j["losses"] = e.table.losses;
  } else {
    j["token_scores"] = e.separable.token_scores;
    j["demo_scores"] = e.separable.demo_scores;
    json inter = json::array();
    for (const auto& t : e.separable.interactions)
      inter.push_back(
          {{"token_slot", t.token_slot}, {"demo_slot", t.demo_slot}, {"weights", t.weights}});
    j["interactions"] = inter;
  }
  return j;
}

EvaluatorConfig parse_evaluator(const json& j, const std::string& where) {
  Obj o(j, where);
  EvaluatorConfig e;
  o.get("kind", e.kind);
  if (e.kind == "remote") {
    o.get("endpoint", e.remote.endpoint);
    o.get("timeout_s", e.remote.timeout_s);
    o.get("template", e.remote.prompt_template);
    o.get("vocab", e.remote.vocab);
    o.get("corpus", e.remote.corpus_path);
  } else if (e.kind == "table" || e.kind == "separable") {
    if (const auto* g = o.child("generate")) {
      Obj go(*g, where + ".generate");
      EvaluatorConfig::Generate gen;
      go.get("seed", gen.seed);
      go.get("lo", gen.lo);
      go.get("hi", gen.hi);
      go.finish();
      e.generate = gen;
    }
    if (e.kind == "table") {
      o.get("losses", e.table.losses);
    } else {
      o.get("token_scores", e.separable.token_scores);
      o.get("demo_scores", e.separable.demo_scores);
      if (const auto* in = o.child("interactions")) {
        require(in->is_array(), ErrorCode::kConfig, where + ".interactions: expected an array");
        for (const auto& t : *in) {
          Obj io(t, where + ".interactions[]");
          Interaction x;
          io.get("token_slot", x.token_slot);
          io.get("demo_slot", x.demo_slot);
          io.get("weights", x.weights);
          io.finish();
          e.separable.interactions.push_back(std::move(x));
        }
      }
    }
  } else {
    fail(ErrorCode::kConfig, where + ".kind: unknown evaluator kind '" + e.kind + "'");
  }
  o.finish();
  return e;
}

}  // namespace

EvaluatorSpec EvaluatorConfig::resolve(const ProblemShape& shape) const {
  if (kind == "remote") {
    RemoteSpec r = remote;
    const std::string prefix = "builtin:";
    if (r.prompt_template.rfind(prefix, 0) == 0) {
      const auto name = r.prompt_template.substr(prefix.size());
      const auto t = builtin_template(name);
      require(t.has_value(), ErrorCode::kConfig, "unknown builtin template '" + name + "'");
      r.prompt_template = *t;
    }
    return r;
  }
  if (kind == "table")
    return generate ? random_table(shape, generate->seed, generate->lo, generate->hi) : table;
  return generate ? random_separable(shape, generate->seed, generate->lo, generate->hi)
                  : separable;
}

SimConfig RunConfig::sim_config() const {
  SimConfig s = sim;
  s.seed = seed;
  return s;
}

void RunConfig::validate() const {
  shape.validate();
  sim.validate();
  inner.validate();
  upper.validate();
  gradient.validate();
  require(evaluators.size() == 1 || evaluators.size() == sim.n_benign, ErrorCode::kConfig,
          "evaluators: give one entry or one per benign worker");
  for (const auto& e : evaluators) {
    if (e.kind == "remote") {
      // The endpoint may be supplied later as an override.
      const auto& ep = e.remote.endpoint;
      require(ep.empty() || (ep.rfind("tcp:", 0) == 0 && ep.size() > 4) ||
                  (ep.rfind("stdio:", 0) == 0 && ep.size() > 6),
              ErrorCode::kConfig, "endpoint must be tcp:HOST:PORT or stdio:CMD, got '" + ep + "'");
      if (!e.remote.corpus_path.empty()) {
        std::ifstream f(e.remote.corpus_path);
        require(f.good(), ErrorCode::kConfig, "corpus file not found: " + e.remote.corpus_path);
      }
    } else if (e.kind == "table" && !e.generate) {
      require(shape.enumerable(), ErrorCode::kShapeTooLarge,
              "table evaluator needs N^M * V^U <= 1e6");
      require(e.table.losses.size() == static_cast<std::size_t>(shape.assignment_count()),
              ErrorCode::kConfig, "table evaluator: losses must have N^M * V^U entries");
    }
  }
  require(gradient.p_min <= 1.0 / static_cast<double>(std::max(shape.N, shape.V)),
          ErrorCode::kConfig, "gradient.p_min must be <= 1/max(N, V)");
}

RunConfig parse_config(const json& doc) {
  Obj o(doc, "config");
  RunConfig c;
  std::string mode = "asyn";
  o.get("mode", mode);
  require(mode == "asyn" || mode == "cen", ErrorCode::kConfig, "mode must be asyn or cen");
  c.mode = mode == "cen" ? RunMode::kCen : RunMode::kAsyn;
  o.get("seed", c.seed);

  if (const auto* s = o.child("shape")) {
    Obj so(*s, "shape");
    so.get("M", c.shape.M);
    so.get("N", c.shape.N);
    so.get("U", c.shape.U);
    so.get("V", c.shape.V);
    so.finish();
  }
  const auto* one = o.child("evaluator");
  const auto* many = o.child("evaluators");
  require(!(one && many), ErrorCode::kConfig, "give either evaluator or evaluators, not both");
  if (one) c.evaluators = {parse_evaluator(*one, "evaluator")};
  if (many) {
    require(many->is_array() && !many->empty(), ErrorCode::kConfig,
            "evaluators: expected a non-empty array");
    c.evaluators.clear();
    for (std::size_t i = 0; i < many->size(); ++i)
      c.evaluators.push_back(parse_evaluator((*many)[i], "evaluators[" + std::to_string(i) + "]"));
  }
  if (const auto* s = o.child("sim")) c.sim = parse_sim(*s);
  if (const auto* s = o.child("inner")) {
    Obj io(*s, "inner");
    io.get("K", c.inner.K);
    io.get("mu", c.inner.mu);
    io.get("psi", c.inner.psi);
    io.get("eta_p", c.inner.eta_p);
    io.get("eta_z", c.inner.eta_z);
    io.get("eta_rho", c.inner.eta_rho);
    io.finish();
  }
  if (const auto* s = o.child("upper")) {
    Obj uo(*s, "upper");
    uo.get("eta_p", c.upper.eta_p);
    uo.get("eta_q", c.upper.eta_q);
    uo.get("eta_z", c.upper.eta_z);
    uo.get("eta_lambda", c.upper.eta_lambda);
    uo.get("c1", c.upper.c1);
    uo.get("psi", c.upper.psi);
    uo.get("lambda_max", c.upper.lambda_max);
    uo.finish();
  }
  if (const auto* s = o.child("gradient")) {
    Obj go(*s, "gradient");
    std::string est = "reinforce";
    go.get("estimator", est);
    require(est == "reinforce" || est == "exact", ErrorCode::kConfig,
            "gradient.estimator must be reinforce or exact");
    c.gradient.estimator = est == "exact" ? GradientEstimator::kExact : GradientEstimator::kReinforce;
    go.get("samples", c.gradient.samples);
    go.get("baseline", c.gradient.baseline);
    go.get("p_min", c.gradient.p_min);
    go.finish();
  }
  if (const auto* s = o.child("output")) {
    Obj oo(*s, "output");
    oo.get("dir", c.output.dir);
    oo.get("trace", c.output.trace);
    oo.get("csv", c.output.csv);
    oo.finish();
  }
  o.finish();
  c.validate();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), ErrorCode::kConfig, "cannot open config file: " + path);
  json doc;
  try {
    doc = json::parse(f);
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, path + ": " + e.what());
  }
  return parse_config(doc);
}

json to_json(const RunConfig& c) {
  json evs = json::array();
  for (const auto& e : c.evaluators) evs.push_back(evaluator_json(e));
  return {{"mode", c.mode == RunMode::kCen ? "cen" : "asyn"},
          {"seed", c.seed},
          {"shape", {{"M", c.shape.M}, {"N", c.shape.N}, {"U", c.shape.U}, {"V", c.shape.V}}},
          {"evaluators", evs},
          {"sim", sim_json(c.sim)},
          {"inner",
           {{"K", c.inner.K},
            {"mu", c.inner.mu},
            {"psi", c.inner.psi},
            {"eta_p", c.inner.eta_p},
            {"eta_z", c.inner.eta_z},
            {"eta_rho", c.inner.eta_rho}}},
          {"upper",
           {{"eta_p", c.upper.eta_p},
            {"eta_q", c.upper.eta_q},
            {"eta_z", c.upper.eta_z},
            {"eta_lambda", c.upper.eta_lambda},
            {"c1", c.upper.c1},
            {"psi", c.upper.psi},
            {"lambda_max", c.upper.lambda_max}}},
          {"gradient",
           {{"estimator",
             c.gradient.estimator == GradientEstimator::kExact ? "exact" : "reinforce"},
            {"samples", c.gradient.samples},
            {"baseline", c.gradient.baseline},
            {"p_min", c.gradient.p_min}}},
          {"output", {{"dir", c.output.dir}, {"trace", c.output.trace}, {"csv", c.output.csv}}}};
}

std::string config_hash(const RunConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : to_json(cfg).dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void set_remote_endpoint(RunConfig& cfg, const std::string& endpoint) {
  for (auto& e : cfg.evaluators) {
    if (e.kind != "remote") e = EvaluatorConfig{"remote", std::nullopt, {}, {}, {}};
    e.remote.endpoint = endpoint;
  }
}

}  // namespace asyndbt
