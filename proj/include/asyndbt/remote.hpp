// Copyright 2026 The AsynDBT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "asyndbt/oracle.hpp"
#include "asyndbt/prompt.hpp"

namespace asyndbt {

/// Bidirectional newline-delimited byte stream: a TCP connection or the
/// stdin/stdout of a child process started with /bin/sh -c.
class LineChannel {
 public:
  /// "tcp:HOST:PORT" or "stdio:CMD".
  static std::unique_ptr<LineChannel> open(const std::string& endpoint);

  ~LineChannel();
  LineChannel(const LineChannel&) = delete;
  LineChannel& operator=(const LineChannel&) = delete;

  void send_line(const std::string& line);
  /// Next complete line, or nullopt once `deadline` passes.
  std::optional<std::string> read_line(std::chrono::steady_clock::time_point deadline);

 private:
  LineChannel(int fd, int child_pid) : fd_(fd), child_(child_pid) {}

  int fd_ = -1;
  int child_ = -1;
  std::string buffer_;
};

/// Black-box loss served by a peer over the request/response protocol
///   -> {"id": u64, "tokens": [u32], "demos": [u32], "prompt": string?}
///   <- {"id": u64, "loss": f64}
/// Responses may arrive in any order and are matched by id.
class RemoteEvaluator final : public Evaluator {
 public:
  RemoteEvaluator(ProblemShape shape, RemoteSpec spec);
  ~RemoteEvaluator() override;

  const ProblemShape& shape() const override { return shape_; }
  double evaluate(const DiscreteAssignment& a) override;
  std::vector<double> evaluate_batch(
      std::span<const DiscreteAssignment> batch) override;
  bool is_pure() const override { return false; }

 private:
  void connect();
  std::string request_line(std::uint64_t id, const DiscreteAssignment& a) const;

  ProblemShape shape_;
  RemoteSpec spec_;
  std::optional<DemoCorpus> corpus_;
  std::unique_ptr<LineChannel> channel_;
  std::uint64_t next_id_ = 1;
};

}  // namespace asyndbt
