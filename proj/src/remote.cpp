// Copyright 2026 The AsynDBT Authors
// SPDX-License-Identifier: Apache-2.0

#include "asyndbt/remote.hpp"

#include <netdb.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <thread>

#include "asyndbt/error.hpp"
#include "json.hpp"

namespace asyndbt {

namespace {

[[noreturn]] void channel_error(const std::string& what) {
  fail(ErrorCode::kEvaluator, what + ": " + std::strerror(errno));
}

int connect_tcp(const std::string& host, const std::string& port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &res); rc != 0)
    fail(ErrorCode::kEvaluator,
         "cannot resolve " + host + ":" + port + ": " + ::gai_strerror(rc));
  int fd = -1;
  for (auto* ai = res; ai; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) channel_error("cannot connect to " + host + ":" + port);
  return fd;
}

}  // namespace

std::unique_ptr<LineChannel> LineChannel::open(const std::string& endpoint) {
  if (endpoint.rfind("tcp:", 0) == 0) {
    const auto rest = endpoint.substr(4);
    const auto colon = rest.rfind(':');
    require(colon != std::string::npos && colon > 0 && colon + 1 < rest.size(),
            ErrorCode::kConfig, "endpoint must be tcp:HOST:PORT");
    const int fd = connect_tcp(rest.substr(0, colon), rest.substr(colon + 1));
    return std::unique_ptr<LineChannel>(new LineChannel(fd, -1));
  }
  if (endpoint.rfind("stdio:", 0) == 0) {
    const auto cmd = endpoint.substr(6);
    require(!cmd.empty(), ErrorCode::kConfig, "endpoint must be stdio:CMD");
    // A socketpair instead of two pipes gives one fd and lets writes use
    // MSG_NOSIGNAL when the child has exited.
    int sv[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM, 0, sv) != 0) channel_error("socketpair");
    const pid_t pid = ::fork();
    if (pid < 0) channel_error("fork");
    if (pid == 0) {
      ::close(sv[0]);
      ::dup2(sv[1], STDIN_FILENO);
      ::dup2(sv[1], STDOUT_FILENO);
      ::close(sv[1]);
      ::execl("/bin/sh", "sh", "-c", cmd.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(sv[1]);
    return std::unique_ptr<LineChannel>(new LineChannel(sv[0], pid));
  }
  fail(ErrorCode::kConfig, "unknown endpoint '" + endpoint +
                               "' (expected tcp:HOST:PORT or stdio:CMD)");
}

LineChannel::~LineChannel() {
  if (fd_ >= 0) ::close(fd_);
  if (child_ > 0) {
    // Closing our end delivers EOF; give the peer a moment before killing it.
    for (int i = 0; i < 50; ++i) {
      if (::waitpid(child_, nullptr, WNOHANG) == child_) return;
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    ::kill(child_, SIGKILL);
    ::waitpid(child_, nullptr, 0);
  }
}

void LineChannel::send_line(const std::string& line) {
  std::string data = line;
  data += '\n';
  std::size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = ::send(fd_, data.data() + off, data.size() - off, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      channel_error("evaluator write failed");
    }
    off += static_cast<std::size_t>(n);
  }
}

std::optional<std::string> LineChannel::read_line(
    std::chrono::steady_clock::time_point deadline) {
  while (true) {
    if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return line;
    }
    const auto now = std::chrono::steady_clock::now();
    if (now >= deadline) return std::nullopt;
    const auto wait =
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count();
    pollfd pfd{fd_, POLLIN, 0};
    const int rc = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(wait + 1, 1 << 30)));
    if (rc < 0) {
      if (errno == EINTR) continue;
      channel_error("evaluator poll failed");
    }
    if (rc == 0) continue;
    char chunk[4096];
    const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      channel_error("evaluator read failed");
    }
    if (n == 0) fail(ErrorCode::kEvaluator, "evaluator closed the connection");
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

// ---------------------------------------------------------------------------

RemoteEvaluator::RemoteEvaluator(ProblemShape shape, RemoteSpec spec)
    : shape_(shape), spec_(std::move(spec)) {
  shape_.validate();
  require(spec_.timeout_s > 0.0, ErrorCode::kConfig, "timeout must be positive");
  if (!spec_.prompt_template.empty()) {
    require(spec_.vocab.size() == shape_.N, ErrorCode::kConfig,
            "remote evaluator vocabulary must have N words");
    if (!spec_.corpus_path.empty()) corpus_ = load_demo_corpus(spec_.corpus_path);
  }
}

RemoteEvaluator::~RemoteEvaluator() = default;

void RemoteEvaluator::connect() {
  if (!channel_) channel_ = LineChannel::open(spec_.endpoint);
}

std::string RemoteEvaluator::request_line(std::uint64_t id,
                                          const DiscreteAssignment& a) const {
  nlohmann::json req = {{"id", id}, {"tokens", a.tokens}, {"demos", a.demos}};
  if (!spec_.prompt_template.empty()) {
    static const std::vector<std::vector<DemoRecord>> kNoDemos;
    const Fields no_query;
    req["prompt"] = render_prompt(spec_.prompt_template, spec_.vocab, shape_, a,
                                  corpus_ ? corpus_->classes : kNoDemos,
                                  corpus_ ? corpus_->query : no_query);
  }
  return req.dump();
}

double RemoteEvaluator::evaluate(const DiscreteAssignment& a) {
  return evaluate_batch(std::span(&a, 1)).front();
}

std::vector<double> RemoteEvaluator::evaluate_batch(
    std::span<const DiscreteAssignment> batch) {
  for (const auto& a : batch) check_assignment(shape_, a);
  connect();
  const std::uint64_t first = next_id_;
  next_id_ += batch.size();
  for (std::size_t s = 0; s < batch.size(); ++s)
    channel_->send_line(request_line(first + s, batch[s]));

  std::vector<double> out(batch.size());
  std::vector<bool> have(batch.size(), false);
  std::size_t pending = batch.size();
  const auto deadline = std::chrono::steady_clock::now() +
                        std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                            std::chrono::duration<double>(spec_.timeout_s));
  while (pending > 0) {
    auto line = channel_->read_line(deadline);
    if (!line) {
      // The stream may still deliver late answers; start over on a fresh one.
      channel_.reset();
      fail(ErrorCode::kEvaluator, "evaluator timed out");
    }
    if (line->empty()) continue;
    std::uint64_t id = 0;
    double loss = 0.0;
    try {
      const auto msg = nlohmann::json::parse(*line);
      id = msg.at("id").get<std::uint64_t>();
      loss = msg.at("loss").get<double>();
    } catch (const nlohmann::json::exception& e) {
      channel_.reset();
      fail(ErrorCode::kEvaluator, std::string("malformed evaluator response: ") + e.what());
    }
    if (id < first) continue;  // late answer to an abandoned request
    if (id >= first + batch.size()) {
      channel_.reset();
      fail(ErrorCode::kEvaluator, "evaluator answered unknown id " + std::to_string(id));
    }
    if (!std::isfinite(loss) || loss < 0.0) {
      channel_.reset();
      fail(ErrorCode::kEvaluator, "evaluator returned an invalid loss");
    }
    const auto slot = static_cast<std::size_t>(id - first);
    if (!have[slot]) {
      have[slot] = true;
      out[slot] = loss;
      --pending;
    }
  }
  return out;
}

}  // namespace asyndbt
