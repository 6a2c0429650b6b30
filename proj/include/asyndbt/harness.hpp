// Copyright 2026 The AsynDBT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "asyndbt/config.hpp"
#include "asyndbt/error.hpp"
#include "asyndbt/simnet.hpp"

namespace asyndbt {

enum ExitCode : int {
  kExitOk = 0,
  kExitMismatch = 1,
  kExitConfig = 2,
  kExitEvaluator = 3,
  kExitInvariant = 4,
};

/// Process exit code for an error.
int exit_code_for(ErrorCode code);

/// Builds one evaluator per benign worker.
Problem build_problem(const RunConfig& cfg);

struct RunOutput {
  SimResult result;
  std::vector<std::string> lines;  // JSONL, header first
};

/// The header record: config with defaults, its hash, and the seed.
nlohmann::json trace_header(const RunConfig& cfg);

/// Runs the configured mode and collects the trace in memory.
RunOutput execute(const RunConfig& cfg);

/// Plot-ready summary: iteration, clock, loss, residual (summed over
/// slots, empty for cen), planes, accuracy.
std::string summary_csv(const std::vector<std::string>& lines);

/// Writes <dir>/<trace> and <dir>/<csv>, creating the directory.
void write_outputs(const RunConfig& cfg, const RunOutput& out);

/// Runs and writes outputs, printing the decoded assignment and final loss.
int cmd_run(const RunConfig& cfg, std::ostream& out, std::ostream& err);

/// Enumerated optimum, its loss, and exact gradients at the uniform policy
/// for each distinct evaluator.
nlohmann::json oracle_report(const RunConfig& cfg);
int cmd_oracle(const RunConfig& cfg, std::ostream& out, std::ostream& err);

struct ReplayReport {
  bool identical = false;
  std::size_t records = 0;  // records compared
  /// Index of the first differing record; the header is record 0.
  std::optional<std::size_t> first_divergent;
  std::string expected;  // regenerated record ("" when missing)
  std::string actual;    // record found in the file ("" when missing)
};

ReplayReport replay_lines(const std::vector<std::string>& lines);
ReplayReport replay_trace(const std::string& path);
int cmd_replay(const std::string& path, std::ostream& out, std::ostream& err);

std::vector<std::string> read_lines(const std::string& path);

}  // namespace asyndbt
