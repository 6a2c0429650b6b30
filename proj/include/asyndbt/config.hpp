// Copyright 2026 The AsynDBT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "asyndbt/federated.hpp"
#include "asyndbt/lower_solver.hpp"
#include "asyndbt/oracle.hpp"
#include "asyndbt/simnet.hpp"

namespace asyndbt {

/// An evaluator as written in a config file: either explicit tables and
/// scores, or a seeded generator for them, or a remote endpoint.
struct EvaluatorConfig {
  struct Generate {
    std::uint64_t seed = 0;
    double lo = 0.0;
    double hi = 1.0;
    friend bool operator==(const Generate&, const Generate&) = default;
  };

  std::string kind = "separable";  // table | separable | remote
  std::optional<Generate> generate;
  TableSpec table;
  SeparableSpec separable;
  RemoteSpec remote;  // prompt_template may be "builtin:NAME"

  EvaluatorSpec resolve(const ProblemShape& shape) const;
  friend bool operator==(const EvaluatorConfig&, const EvaluatorConfig&) = default;
};

struct OutputConfig {
  std::string dir = "out";
  std::string trace = "trace.jsonl";
  std::string csv = "summary.csv";
  friend bool operator==(const OutputConfig&, const OutputConfig&) = default;
};

enum class RunMode { kAsyn, kCen };

struct RunConfig {
  RunMode mode = RunMode::kAsyn;
  std::uint64_t seed = 0;
  ProblemShape shape;
  /// One entry shared by every benign worker, or one per benign worker.
  std::vector<EvaluatorConfig> evaluators{EvaluatorConfig{}};
  SimConfig sim;
  InnerConfig inner;
  UpperConfig upper;
  GradientConfig gradient;
  OutputConfig output;

  /// The simulator settings with the run seed applied.
  SimConfig sim_config() const;
  void validate() const;
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Parses a config document; missing fields take defaults and unknown keys
/// are rejected. Throws Error(kConfig).
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::string& path);

/// Every field, defaults included.
nlohmann::json to_json(const RunConfig& cfg);

/// FNV-1a 64 over the compact serialization, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

/// Replaces every evaluator with a remote one at `endpoint`. Remote
/// settings already present are kept.
void set_remote_endpoint(RunConfig& cfg, const std::string& endpoint);

}  // namespace asyndbt
