// Copyright 2026 The AsynDBT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "asyndbt/oracle.hpp"

namespace asyndbt {

using Fields = std::map<std::string, std::string>;

/// One labelled demonstration: template field values plus its answer.
struct DemoRecord {
  Fields fields;
  std::string label;
};

/// classes[u] holds the V candidate demonstrations for demo slot u.
struct DemoCorpus {
  std::vector<std::vector<DemoRecord>> classes;
  Fields query;
};

/// Reads {"classes": [[{"fields": {...}, "label": "..."}, ...], ...],
///        "query": {...}}.
DemoCorpus load_demo_corpus(const std::string& path);

/// Task templates with [FIELD] placeholders and the optimized [VAR] note.
/// Known names: 5g, cola, sst2, mrpc, qqp, qnli.
std::optional<std::string> builtin_template(const std::string& name);

/// The M chosen vocabulary words joined by single spaces.
std::string fragment_text(std::span<const std::string> vocab,
                          const DiscreteAssignment& a);

/// Demonstration blocks (slot order, each followed by its label) then the
/// query block, separated by blank lines. [VAR] expands to the fragment in
/// every block.
std::string render_prompt(const std::string& tmpl,
                          std::span<const std::string> vocab,
                          const ProblemShape& shape,
                          const DiscreteAssignment& a,
                          const std::vector<std::vector<DemoRecord>>& demos,
                          const Fields& query);

}  // namespace asyndbt
