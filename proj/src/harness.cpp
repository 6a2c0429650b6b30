// Copyright 2026 The AsynDBT Authors
// SPDX-License-Identifier: Apache-2.0

#include "asyndbt/harness.hpp"

#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "asyndbt/error.hpp"
#include "asyndbt/federated.hpp"

namespace asyndbt {

using nlohmann::json;

namespace {
constexpr int kTraceVersion = 1;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfig:
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kShapeTooLarge:
    case ErrorCode::kIo:
      return kExitConfig;
    case ErrorCode::kEvaluator:
    case ErrorCode::kMalformedAssignment:
      return kExitEvaluator;
    case ErrorCode::kInvariant:
      return kExitInvariant;
  }
  return kExitInvariant;
}

Problem build_problem(const RunConfig& cfg) {
  cfg.validate();
  Problem p{cfg.shape, {}, cfg.upper, cfg.inner, cfg.gradient};
  for (std::size_t v = 0; v < cfg.sim.n_benign; ++v) {
    const auto& e = cfg.evaluators.size() == 1 ? cfg.evaluators.front() : cfg.evaluators[v];
    require(e.kind != "remote" || !e.remote.endpoint.empty(), ErrorCode::kConfig,
            "remote evaluator needs an endpoint");
    p.evaluators.push_back(make_evaluator(cfg.shape, e.resolve(cfg.shape)));
  }
  return p;
}

json trace_header(const RunConfig& cfg) {
  return {{"type", "header"},
          {"format", "asyndbt-trace"},
          {"version", kTraceVersion},
          {"config", to_json(cfg)},
          {"config_hash", config_hash(cfg)},
          {"seed", cfg.seed}};
}

RunOutput execute(const RunConfig& cfg) {
  RunOutput out;
  out.lines.push_back(trace_header(cfg).dump());
  const auto problem = build_problem(cfg);
  const TraceSink sink = [&](const json& r) { out.lines.push_back(r.dump()); };
  out.result = cfg.mode == RunMode::kCen ? run_centralized(cfg.sim_config(), problem, sink)
                                         : run(cfg.sim_config(), problem, sink);
  return out;
}

std::string summary_csv(const std::vector<std::string>& lines) {
  std::ostringstream os;
  os.precision(17);
  os << "iteration,clock,loss,residual,planes,accuracy\n";
  for (const auto& line : lines) {
    const auto r = json::parse(line);
    if (r.value("type", "") != "iter") continue;
    os << r["k"].get<std::uint64_t>() << ',' << r["clock"].get<double>() << ','
       << r["loss"].get<double>() << ',';
    if (r.contains("residual")) {
      double total = 0.0;
      for (const auto& x : r["residual"]) total += x.get<double>();
      os << total;
    }
    os << ',';
    if (r.contains("planes")) os << r["planes"].get<std::size_t>();
    os << ',';
    if (!r["accuracy"].is_null()) os << r["accuracy"].get<double>();
    os << '\n';
  }
  return os.str();
}

void write_outputs(const RunConfig& cfg, const RunOutput& out) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(cfg.output.dir, ec);
  require(!ec, ErrorCode::kIo, "cannot create output directory " + cfg.output.dir);
  const auto write = [](const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    require(f.good(), ErrorCode::kIo, "cannot write " + path.string());
    f << text;
    require(f.good(), ErrorCode::kIo, "write failed: " + path.string());
  };
  std::string jsonl;
  for (const auto& l : out.lines) jsonl += l + '\n';
  write(fs::path(cfg.output.dir) / cfg.output.trace, jsonl);
  write(fs::path(cfg.output.dir) / cfg.output.csv, summary_csv(out.lines));
}

int cmd_run(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  try {
    const auto run_out = execute(cfg);
    if (run_out.result.successful_steps == 0 && run_out.result.iterations_run > 0) {
      err << "error: the evaluator failed on every step\n";
      return kExitEvaluator;
    }
    write_outputs(cfg, run_out);
    const auto& s = run_out.result.summary;
    out << "iterations " << s["iterations"] << " clock " << s["clock"] << '\n';
    out << "final_loss " << s["final_loss"] << " (" << s["loss_kind"].get<std::string>()
        << ")\n";
    out << "decoded " << s["decoded"].dump() << '\n';
    out << "trace " << (std::filesystem::path(cfg.output.dir) / cfg.output.trace).string()
        << '\n';
    return kExitOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInvariant;
  }
}

json oracle_report(const RunConfig& cfg) {
  cfg.validate();
  require(cfg.shape.enumerable(), ErrorCode::kShapeTooLarge,
          "oracle needs N^M * V^U <= 1e6");
  json evs = json::array();
  for (std::size_t i = 0; i < cfg.evaluators.size(); ++i) {
    auto ev = make_evaluator(cfg.shape, cfg.evaluators[i].resolve(cfg.shape));
    const auto opt = enumerate_optimum(*ev);
    const auto uniform = Policy::uniform(cfg.shape);
    const auto g = exact_gradients(uniform, *ev);
    evs.push_back({{"index", i},
                   {"kind", cfg.evaluators[i].kind},
                   {"optimum", {{"tokens", opt.assignment.tokens}, {"demos", opt.assignment.demos}}},
                   {"optimal_loss", opt.loss},
                   {"uniform_loss", exact_expected_loss(uniform, *ev)},
                   {"gradients_at_uniform", {{"p", g.p}, {"q", g.q}}}});
  }
  return {{"shape", {{"M", cfg.shape.M}, {"N", cfg.shape.N}, {"U", cfg.shape.U}, {"V", cfg.shape.V}}},
          {"evaluators", evs}};
}

int cmd_oracle(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  try {
    out << oracle_report(cfg).dump(2) << '\n';
    return kExitOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  }
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), ErrorCode::kIo, "cannot open " + path);
  std::vector<std::string> lines;
  for (std::string line; std::getline(f, line);) lines.push_back(line);
  return lines;
}

ReplayReport replay_lines(const std::vector<std::string>& lines) {
  require(!lines.empty(), ErrorCode::kConfig, "empty trace");
  json header;
  try {
    header = json::parse(lines.front());
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, std::string("trace header is not JSON: ") + e.what());
  }
  require(header.value("type", "") == "header" && header.contains("config"),
          ErrorCode::kConfig, "first trace record is not a header");
  require(header.value("version", 0) == kTraceVersion, ErrorCode::kConfig,
          "trace was written by an incompatible version");

  const auto regenerated = execute(parse_config(header["config"])).lines;
  ReplayReport rep;
  const std::size_t n = std::max(lines.size(), regenerated.size());
  for (std::size_t i = 0; i < n; ++i) {
    const std::string* want = i < regenerated.size() ? &regenerated[i] : nullptr;
    const std::string* got = i < lines.size() ? &lines[i] : nullptr;
    rep.records = i + 1;
    if (want && got && *want == *got) continue;
    rep.first_divergent = i;
    rep.expected = want ? *want : "";
    rep.actual = got ? *got : "";
    return rep;
  }
  rep.identical = true;
  return rep;
}

ReplayReport replay_trace(const std::string& path) { return replay_lines(read_lines(path)); }

int cmd_replay(const std::string& path, std::ostream& out, std::ostream& err) {
  try {
    const auto rep = replay_trace(path);
    if (rep.identical) {
      out << "identical: " << rep.records << " records\n";
      return kExitOk;
    }
    out << "divergence at record " << *rep.first_divergent << '\n'
        << "  expected: " << rep.expected << '\n'
        << "  found:    " << rep.actual << '\n';
    return kExitMismatch;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  }
}

}  // namespace asyndbt
