// Copyright 2026 The AsynDBT Authors
// SPDX-License-Identifier: Apache-2.0

#include "asyndbt/prompt.hpp"

#include <cctype>
#include <fstream>

#include "asyndbt/error.hpp"
#include "json.hpp"

namespace asyndbt {

namespace {

constexpr const char* kVar = "VAR";

bool is_placeholder_name(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!(std::isupper(static_cast<unsigned char>(c)) ||
          std::isdigit(static_cast<unsigned char>(c)) || c == '_'))
      return false;
  return true;
}

std::string fill(const std::string& tmpl, const Fields& fields,
                 const std::string& var_text) {
  std::string out;
  out.reserve(tmpl.size() + var_text.size());
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const auto open = tmpl.find('[', pos);
    if (open == std::string::npos) break;
    const auto close = tmpl.find(']', open + 1);
    if (close == std::string::npos) break;
    const std::string_view name(tmpl.data() + open + 1, close - open - 1);
    if (!is_placeholder_name(name)) {
      out.append(tmpl, pos, open + 1 - pos);
      pos = open + 1;
      continue;
    }
    out.append(tmpl, pos, open - pos);
    if (name == kVar) {
      out += var_text;
    } else {
      const auto it = fields.find(std::string(name));
      require(it != fields.end(), ErrorCode::kInvalidArgument,
              "no value for placeholder [" + std::string(name) + "]");
      out += it->second;
    }
    pos = close + 1;
  }
  out.append(tmpl, pos, std::string::npos);
  return out;
}

}  // namespace

DemoCorpus load_demo_corpus(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::kIo, "cannot open demo corpus " + path);
  DemoCorpus corpus;
  try {
    const auto doc = nlohmann::json::parse(in);
    for (const auto& cls : doc.at("classes")) {
      auto& records = corpus.classes.emplace_back();
      for (const auto& r : cls)
        records.push_back({r.value("fields", Fields{}), r.value("label", std::string{})});
    }
    corpus.query = doc.value("query", Fields{});
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, "demo corpus " + path + ": " + e.what());
  }
  return corpus;
}

std::optional<std::string> builtin_template(const std::string& name) {
  static const std::map<std::string, std::string> kTemplates = {
      {"5g",
       "In 5G network, Whether [WORD1] related to [WORD2]? Some contextual "
       "information: [TEXT]. Respond ONLY with \"Yes\" or \"No\". Note: [VAR]."},
      {"cola",
       "Is this sentence [SENTENCE1] grammatically correct? Respond ONLY with "
       "\"Yes\" or \"No\". Note: [VAR]."},
      {"sst2",
       "How is the sentiment of the sentence [SENTENCE1]? Respond ONLY with "
       "\"Great\" or \"Terrible\". Note: [VAR]."},
      {"mrpc",
       "Whether sentence [SENTENCE1] and sentence [SENTENCE2] are semantically "
       "the same? Respond ONLY with \"Yes\" or \"No\". Note: [VAR]."},
      {"qqp",
       "Whether sentence [SENTENCE1] and sentence [SENTENCE2] are paraphrased "
       "from each other? Respond ONLY with \"Yes\" or \"No\". Note: [VAR]."},
      {"qnli",
       "Whether sentence [SENTENCE1] and sentence [SENTENCE2] have semantic "
       "entailment relations? Respond ONLY with \"Yes\" or \"No\". Note: [VAR]."},
  };
  const auto it = kTemplates.find(name);
  if (it == kTemplates.end()) return std::nullopt;
  return it->second;
}

std::string fragment_text(std::span<const std::string> vocab,
                          const DiscreteAssignment& a) {
  std::string out;
  for (std::size_t i = 0; i < a.tokens.size(); ++i) {
    require(a.tokens[i] < vocab.size(), ErrorCode::kMalformedAssignment,
            "token index outside vocabulary");
    if (i) out += ' ';
    out += vocab[a.tokens[i]];
  }
  return out;
}

std::string render_prompt(const std::string& tmpl,
                          std::span<const std::string> vocab,
                          const ProblemShape& shape,
                          const DiscreteAssignment& a,
                          const std::vector<std::vector<DemoRecord>>& demos,
                          const Fields& query) {
  require(tmpl.find("[VAR]") != std::string::npos, ErrorCode::kInvalidArgument,
          "template has no [VAR] placeholder");
  require(vocab.size() == shape.N, ErrorCode::kInvalidArgument,
          "vocabulary size " + std::to_string(vocab.size()) +
              " does not match N = " + std::to_string(shape.N));
  check_assignment(shape, a);
  require(shape.U == 0 || demos.size() >= shape.U, ErrorCode::kInvalidArgument,
          "demo corpus has fewer classes than demo slots");

  const std::string note = fragment_text(vocab, a);
  std::string out;
  for (std::size_t u = 0; u < shape.U; ++u) {
    require(a.demos[u] < demos[u].size(), ErrorCode::kInvalidArgument,
            "demo corpus class " + std::to_string(u) + " is too small");
    const auto& rec = demos[u][a.demos[u]];
    out += fill(tmpl, rec.fields, note);
    if (!rec.label.empty()) out += "\nAnswer: " + rec.label;
    out += "\n\n";
  }
  out += fill(tmpl, query, note);
  return out;
}

}  // namespace asyndbt
