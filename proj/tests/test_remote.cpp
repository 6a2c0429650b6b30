// Copyright 2026 The AsynDBT Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <unistd.h>
#include <sys/wait.h>
#include <signal.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <string>
#include <thread>

#include "asyndbt/error.hpp"
#include "asyndbt/remote.hpp"

using namespace asyndbt;

namespace {

const ProblemShape kShape{2, 3, 1, 2};

RemoteSpec stdio_spec(const std::string& mode, double timeout = 5.0) {
  RemoteSpec s;
  s.endpoint = std::string("stdio:") + STUB_PEER + " --mode " + mode;
  s.timeout_s = timeout;
  return s;
}

/// Runs the stub as a TCP server for the duration of a test.
class TcpPeer {
 public:
  explicit TcpPeer(const std::string& mode) {
    portfile_ = "stub_port_" + std::to_string(::getpid()) + "_" + mode;
    std::remove(portfile_.c_str());
    pid_ = ::fork();
    if (pid_ == 0) {
      ::execl(STUB_PEER, STUB_PEER, "--mode", mode.c_str(), "--tcp", portfile_.c_str(),
              static_cast<char*>(nullptr));
      ::_exit(127);
    }
    for (int i = 0; i < 500 && port_.empty(); ++i) {
      std::ifstream f(portfile_);
      std::getline(f, port_);
      if (port_.empty()) std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
  }
  ~TcpPeer() {
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, nullptr, 0);
    std::remove(portfile_.c_str());
  }
  std::string endpoint() const { return "tcp:127.0.0.1:" + port_; }

 private:
  pid_t pid_ = -1;
  std::string portfile_, port_;
};

ErrorCode code_of(Evaluator& ev, const DiscreteAssignment& a) {
  try {
    ev.evaluate(a);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kInvariant;
}

}  // namespace

TEST_CASE("stdio echo round trip") {
  RemoteEvaluator ev(kShape, stdio_spec("echo"));
  CHECK(ev.evaluate({{0, 1}, {1}}) == 0.42);
  CHECK_FALSE(ev.is_pure());
}

TEST_CASE("tcp echo round trip") {
  TcpPeer peer("echo");
  RemoteSpec s;
  s.endpoint = peer.endpoint();
  s.timeout_s = 5.0;
  RemoteEvaluator ev(kShape, s);
  CHECK(ev.evaluate({{0, 1}, {1}}) == 0.42);
  CHECK(ev.evaluate({{2, 2}, {0}}) == 0.42);
}

TEST_CASE("batches are matched by id when answers arrive out of order") {
  RemoteEvaluator ev(kShape, stdio_spec("sum"));
  std::vector<DiscreteAssignment> batch;
  for (std::uint32_t t = 0; t < 3; ++t)
    for (std::uint32_t d = 0; d < 2; ++d) batch.push_back({{t, 2}, {d}});
  const auto losses = ev.evaluate_batch(batch);
  REQUIRE(losses.size() == batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i)
    CHECK(losses[i] == doctest::Approx(0.1 * (batch[i].tokens[0] + 2) + 0.01 * batch[i].demos[0]));
}

TEST_CASE("tcp batches are matched by id") {
  TcpPeer peer("sum");
  RemoteSpec s;
  s.endpoint = peer.endpoint();
  RemoteEvaluator ev(kShape, s);
  const std::vector<DiscreteAssignment> batch{{{0, 0}, {1}}, {{2, 1}, {0}}, {{1, 1}, {1}}};
  const auto losses = ev.evaluate_batch(batch);
  CHECK(losses[0] == doctest::Approx(0.01));
  CHECK(losses[1] == doctest::Approx(0.3));
  CHECK(losses[2] == doctest::Approx(0.21));
}

TEST_CASE("protocol failures are retryable evaluator errors") {
  SUBCASE("timeout") {
    RemoteEvaluator ev(kShape, stdio_spec("silent", 0.2));
    CHECK(code_of(ev, {{0, 0}, {0}}) == ErrorCode::kEvaluator);
  }
  SUBCASE("malformed response") {
    RemoteEvaluator ev(kShape, stdio_spec("garbage"));
    CHECK(code_of(ev, {{0, 0}, {0}}) == ErrorCode::kEvaluator);
  }
  SUBCASE("unknown id") {
    RemoteEvaluator ev(kShape, stdio_spec("wrong_id"));
    CHECK(code_of(ev, {{0, 0}, {0}}) == ErrorCode::kEvaluator);
  }
  SUBCASE("invalid loss") {
    RemoteEvaluator ev(kShape, stdio_spec("negative"));
    CHECK(code_of(ev, {{0, 0}, {0}}) == ErrorCode::kEvaluator);
  }
  SUBCASE("peer that cannot be reached") {
    RemoteSpec s;
    s.endpoint = "tcp:127.0.0.1:1";
    s.timeout_s = 1.0;
    RemoteEvaluator ev(kShape, s);
    CHECK(code_of(ev, {{0, 0}, {0}}) == ErrorCode::kEvaluator);
  }
  SUBCASE("the error is flagged retryable") {
    RemoteEvaluator ev(kShape, stdio_spec("garbage"));
    try {
      ev.evaluate({{0, 0}, {0}});
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.retryable());
    }
  }
}

TEST_CASE("malformed assignments are rejected before sending") {
  RemoteEvaluator ev(kShape, stdio_spec("echo"));
  CHECK(code_of(ev, {{9, 0}, {0}}) == ErrorCode::kMalformedAssignment);
}

TEST_CASE("recovers after a failure") {
  RemoteEvaluator ev(kShape, stdio_spec("echo"));
  CHECK(ev.evaluate({{0, 0}, {0}}) == 0.42);
  CHECK(ev.evaluate({{1, 0}, {0}}) == 0.42);
}

TEST_CASE("prompt field is sent when a template is configured") {
  RemoteSpec s = stdio_spec("echo");
  s.prompt_template = "Note: [VAR].";
  s.corpus_path = EXAMPLES_DIR "/corpus_5g.json";
  s.vocab = {"a", "b", "c"};
  RemoteEvaluator ev(kShape, s);
  CHECK(ev.evaluate({{0, 1}, {1}}) == 0.42);
  s.vocab = {"a"};
  CHECK_THROWS_AS(RemoteEvaluator(kShape, s), Error);
}

TEST_CASE("bad endpoints") {
  RemoteSpec s;
  s.endpoint = "udp:foo";
  RemoteEvaluator ev(kShape, s);
  CHECK_THROWS_AS(ev.evaluate({{0, 0}, {0}}), Error);
}
