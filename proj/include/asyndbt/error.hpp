// Copyright 2026 The AsynDBT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace asyndbt {

enum class ErrorCode {
  kInvalidArgument,
  kConfig,
  kEvaluator,           // retryable: timeout, broken pipe, protocol violation
  kMalformedAssignment, // not retryable
  kShapeTooLarge,
  kInvariant,
  kIo,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  bool retryable() const noexcept { return code_ == ErrorCode::kEvaluator; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace asyndbt
