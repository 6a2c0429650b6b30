// Copyright 2026 The AsynDBT Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end. Talks to the library only through the C API.

#include <cstdint>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "asyndbt/asyndbt.h"

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> iters;
  std::optional<std::string> out;
  std::optional<std::string> evaluator;
};

int report(adbt_status st) {
  std::cerr << "error: " << adbt_last_error() << '\n';
  return adbt_exit_code(st);
}

std::string take(char* s) {
  std::string out = s ? s : "";
  adbt_string_free(s);
  return out;
}

/// Loads the config and applies command-line overrides. Returns 0 or an
/// exit code.
int load(const Overrides& o, adbt_config** cfg) {
  adbt_status st = adbt_config_load(o.config.c_str(), cfg);
  if (st != ADBT_OK) return report(st);
  if (o.seed && (st = adbt_config_set_seed(*cfg, *o.seed)) != ADBT_OK) return report(st);
  if (o.iters && (st = adbt_config_set_iterations(*cfg, *o.iters)) != ADBT_OK) return report(st);
  if (o.out && (st = adbt_config_set_output_dir(*cfg, o.out->c_str())) != ADBT_OK)
    return report(st);
  if (o.evaluator &&
      (st = adbt_config_set_evaluator_endpoint(*cfg, o.evaluator->c_str())) != ADBT_OK)
    return report(st);
  return 0;
}

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "Run configuration (JSON)")->required();
  cmd->add_option("--seed", o.seed, "Override the seed");
  cmd->add_option("--iters", o.iters, "Override the outer iteration budget");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--evaluator", o.evaluator, "Remote evaluator: tcp:HOST:PORT or stdio:CMD");
}

int do_run(const Overrides& o) {
  adbt_config* cfg = nullptr;
  if (int rc = load(o, &cfg)) return rc;
  adbt_result* res = nullptr;
  const adbt_status st = adbt_run(cfg, 1, &res);
  adbt_config_free(cfg);
  if (st != ADBT_OK) return report(st);
  char* summary = nullptr;
  adbt_result_summary_json(res, &summary);
  const auto s = nlohmann::json::parse(take(summary));
  adbt_result_free(res);
  std::cout << "iterations " << s["iterations"] << "  clock " << s["clock"] << '\n'
            << "final loss " << s["final_loss"] << " (" << s["loss_kind"].get<std::string>()
            << ")\n";
  for (std::size_t v = 0; v < s["decoded"].size(); ++v)
    std::cout << "worker " << v << " tokens " << s["decoded"][v]["tokens"] << " demos "
              << s["decoded"][v]["demos"] << '\n';
  return 0;
}

int do_oracle(const Overrides& o) {
  adbt_config* cfg = nullptr;
  if (int rc = load(o, &cfg)) return rc;
  char* text = nullptr;
  const adbt_status st = adbt_oracle_report(cfg, &text);
  adbt_config_free(cfg);
  if (st != ADBT_OK) return report(st);
  std::cout << take(text) << '\n';
  return 0;
}

int do_replay(const std::string& path) {
  char* text = nullptr;
  const adbt_status st = adbt_replay(path.c_str(), &text);
  if (st != ADBT_OK && st != ADBT_ERR_MISMATCH) return report(st);
  const auto r = nlohmann::json::parse(take(text));
  if (st == ADBT_OK) {
    std::cout << "identical: " << r["records"] << " records\n";
    return 0;
  }
  std::cout << "divergence at record " << r["first_divergent"] << '\n'
            << "  expected: " << r["expected"].get<std::string>() << '\n'
            << "  found:    " << r["found"].get<std::string>() << '\n';
  return adbt_exit_code(st);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Asynchronous federated bilevel prompt optimizer"};
  app.set_version_flag("--version", adbt_version());
  app.require_subcommand(1);

  Overrides run_o, oracle_o;
  auto* run = app.add_subcommand("run", "Run an experiment and write its trace");
  add_common(run, run_o);
  auto* oracle = app.add_subcommand("oracle", "Print enumeration oracles for a config");
  add_common(oracle, oracle_o);
  std::string trace;
  auto* replay = app.add_subcommand("replay", "Re-execute a trace and compare it");
  replay->add_option("trace", trace, "Trace file (JSONL)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  if (*run) return do_run(run_o);
  if (*oracle) return do_oracle(oracle_o);
  return do_replay(trace);
}
