// Copyright 2026 The AsynDBT Authors
// SPDX-License-Identifier: Apache-2.0

#include "asyndbt/asyndbt.h"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <new>
#include <string>

#include "asyndbt/config.hpp"
#include "asyndbt/error.hpp"
#include "asyndbt/harness.hpp"
#include "asyndbt/simplex.hpp"

struct adbt_config {
  asyndbt::RunConfig cfg;
};

struct adbt_result {
  asyndbt::RunOutput out;
};

namespace {

thread_local std::string g_last_error;

adbt_status status_for(asyndbt::ErrorCode code) {
  using asyndbt::ErrorCode;
  switch (code) {
    case ErrorCode::kInvalidArgument: return ADBT_ERR_INVALID_ARGUMENT;
    case ErrorCode::kConfig: return ADBT_ERR_CONFIG;
    case ErrorCode::kEvaluator: return ADBT_ERR_EVALUATOR;
    case ErrorCode::kMalformedAssignment: return ADBT_ERR_MALFORMED_ASSIGNMENT;
    case ErrorCode::kShapeTooLarge: return ADBT_ERR_SHAPE_TOO_LARGE;
    case ErrorCode::kInvariant: return ADBT_ERR_INVARIANT;
    case ErrorCode::kIo: return ADBT_ERR_IO;
  }
  return ADBT_ERR_INTERNAL;
}

/// Runs `fn`, translating exceptions into status codes.
template <class F>
adbt_status guarded(F&& fn) {
  try {
    g_last_error.clear();
    return fn();
  } catch (const asyndbt::Error& e) {
    g_last_error = e.what();
    return status_for(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return ADBT_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return ADBT_ERR_INTERNAL;
  }
}

adbt_status null_arg(const char* what) {
  g_last_error = std::string(what) + " must not be null";
  return ADBT_ERR_INVALID_ARGUMENT;
}

char* dup(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

}  // namespace

extern "C" {

const char* adbt_version(void) { return "0.1.0"; }
const char* adbt_last_error(void) { return g_last_error.c_str(); }
void adbt_string_free(char* s) { std::free(s); }

int adbt_exit_code(adbt_status status) {
  switch (status) {
    case ADBT_OK: return asyndbt::kExitOk;
    case ADBT_ERR_MISMATCH: return asyndbt::kExitMismatch;
    case ADBT_ERR_INVALID_ARGUMENT:
    case ADBT_ERR_CONFIG:
    case ADBT_ERR_IO:
    case ADBT_ERR_SHAPE_TOO_LARGE: return asyndbt::kExitConfig;
    case ADBT_ERR_EVALUATOR:
    case ADBT_ERR_MALFORMED_ASSIGNMENT: return asyndbt::kExitEvaluator;
    case ADBT_ERR_INVARIANT:
    case ADBT_ERR_INTERNAL: return asyndbt::kExitInvariant;
  }
  return asyndbt::kExitInvariant;
}

adbt_status adbt_config_load(const char* path, adbt_config** out) {
  if (!path) return null_arg("path");
  if (!out) return null_arg("out");
  return guarded([&] {
    *out = new adbt_config{asyndbt::load_config(path)};
    return ADBT_OK;
  });
}

adbt_status adbt_config_from_json(const char* text, adbt_config** out) {
  if (!text) return null_arg("text");
  if (!out) return null_arg("out");
  return guarded([&] {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      asyndbt::fail(asyndbt::ErrorCode::kConfig, e.what());
    }
    *out = new adbt_config{asyndbt::parse_config(doc)};
    return ADBT_OK;
  });
}

void adbt_config_free(adbt_config* cfg) { delete cfg; }

adbt_status adbt_config_set_seed(adbt_config* cfg, uint64_t seed) {
  if (!cfg) return null_arg("cfg");
  cfg->cfg.seed = seed;
  return ADBT_OK;
}

adbt_status adbt_config_set_iterations(adbt_config* cfg, uint64_t iterations) {
  if (!cfg) return null_arg("cfg");
  cfg->cfg.sim.iterations = static_cast<std::size_t>(iterations);
  return ADBT_OK;
}

adbt_status adbt_config_set_output_dir(adbt_config* cfg, const char* dir) {
  if (!cfg) return null_arg("cfg");
  if (!dir) return null_arg("dir");
  cfg->cfg.output.dir = dir;
  return ADBT_OK;
}

adbt_status adbt_config_set_evaluator_endpoint(adbt_config* cfg, const char* endpoint) {
  if (!cfg) return null_arg("cfg");
  if (!endpoint) return null_arg("endpoint");
  return guarded([&] {
    asyndbt::set_remote_endpoint(cfg->cfg, endpoint);
    cfg->cfg.validate();
    return ADBT_OK;
  });
}

adbt_status adbt_config_to_json(const adbt_config* cfg, char** out) {
  if (!cfg) return null_arg("cfg");
  if (!out) return null_arg("out");
  return guarded([&] {
    *out = dup(asyndbt::to_json(cfg->cfg).dump(2));
    return ADBT_OK;
  });
}

adbt_status adbt_run(const adbt_config* cfg, int write_files, adbt_result** out) {
  if (!cfg) return null_arg("cfg");
  if (!out) return null_arg("out");
  return guarded([&] {
    auto res = std::make_unique<adbt_result>();
    res->out = asyndbt::execute(cfg->cfg);
    const auto& r = res->out.result;
    asyndbt::require(r.successful_steps > 0 || r.iterations_run == 0,
                     asyndbt::ErrorCode::kEvaluator, "the evaluator failed on every step");
    if (write_files) asyndbt::write_outputs(cfg->cfg, res->out);
    *out = res.release();
    return ADBT_OK;
  });
}

void adbt_result_free(adbt_result* result) { delete result; }

double adbt_result_final_loss(const adbt_result* result) {
  return result ? result->out.result.final_loss : 0.0;
}

uint64_t adbt_result_iterations(const adbt_result* result) {
  return result ? result->out.result.iterations_run : 0;
}

double adbt_result_clock(const adbt_result* result) {
  return result ? result->out.result.clock : 0.0;
}

adbt_status adbt_result_summary_json(const adbt_result* result, char** out) {
  if (!result) return null_arg("result");
  if (!out) return null_arg("out");
  return guarded([&] {
    *out = dup(result->out.result.summary.dump());
    return ADBT_OK;
  });
}

adbt_status adbt_result_trace(const adbt_result* result, char** out) {
  if (!result) return null_arg("result");
  if (!out) return null_arg("out");
  return guarded([&] {
    std::string text;
    for (const auto& l : result->out.lines) text += l + '\n';
    *out = dup(text);
    return ADBT_OK;
  });
}

adbt_status adbt_oracle_report(const adbt_config* cfg, char** out) {
  if (!cfg) return null_arg("cfg");
  if (!out) return null_arg("out");
  return guarded([&] {
    *out = dup(asyndbt::oracle_report(cfg->cfg).dump(2));
    return ADBT_OK;
  });
}

adbt_status adbt_replay(const char* trace_path, char** report) {
  if (!trace_path) return null_arg("trace_path");
  return guarded([&] {
    const auto rep = asyndbt::replay_trace(trace_path);
    nlohmann::json j{{"identical", rep.identical}, {"records", rep.records}};
    if (rep.first_divergent) {
      j["first_divergent"] = *rep.first_divergent;
      j["expected"] = rep.expected;
      j["found"] = rep.actual;
    }
    if (report) *report = dup(j.dump());
    if (!rep.identical) {
      g_last_error = "trace diverges at record " + std::to_string(*rep.first_divergent);
      return ADBT_ERR_MISMATCH;
    }
    return ADBT_OK;
  });
}

adbt_status adbt_project_simplex(const double* x, size_t n, double* out) {
  if (!x) return null_arg("x");
  if (!out) return null_arg("out");
  return guarded([&] {
    const auto p = asyndbt::project_to_simplex(std::span<const double>(x, n));
    std::copy(p.begin(), p.end(), out);
    return ADBT_OK;
  });
}

}  // extern "C"
