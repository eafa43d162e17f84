#pragma once

// Line-delimited JSON protocol for environments that live in another process.
//
//   server -> client (once): {"spec": {observation_dim, action_dim, action_bounds, episode_length, dt, name}}
//   client -> server:        {"cmd":"reset"} | {"cmd":"step","action":[...]}
//   server -> client:        {"obs":[...],"reward":r,"terminal":b,"timeout":b}
//
// A server that cannot satisfy a request replies {"error": "..."}.

#include <iosfwd>
#include <memory>
#include <string>

#include "owqe/envs.hpp"

namespace owqe {

/// Bidirectional line transport.
class LineChannel {
 public:
  virtual ~LineChannel() = default;
  virtual void send(const std::string& line) = 0;
  /// Blocks for the next line; throws EnvironmentFault when the peer is gone.
  virtual std::string receive() = 0;
};

/// Server side: wraps an Environment and answers protocol lines.
class EnvServer {
 public:
  explicit EnvServer(std::unique_ptr<Environment> env);

  std::string handshake() const;
  /// Handles one request line and returns the reply line (no trailing newline).
  std::string handle(const std::string& request);

  /// Writes the handshake, then answers requests until EOF.
  void serve(std::istream& in, std::ostream& out);

 private:
  std::unique_ptr<Environment> env_;
};

/// In-process channel that talks directly to an EnvServer.
class LoopbackChannel final : public LineChannel {
 public:
  explicit LoopbackChannel(std::unique_ptr<Environment> env);
  void send(const std::string& line) override;
  std::string receive() override;

 private:
  EnvServer server_;
  std::string pending_;
  bool handshake_sent_ = false;
};

/// Spawns `/bin/sh -c command` and talks over its stdin/stdout.
class ProcessChannel final : public LineChannel {
 public:
  explicit ProcessChannel(const std::string& command);
  ~ProcessChannel() override;
  ProcessChannel(const ProcessChannel&) = delete;
  ProcessChannel& operator=(const ProcessChannel&) = delete;

  void send(const std::string& line) override;
  std::string receive() override;

 private:
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
};

/// Client side: an Environment backed by a protocol peer.
class ExternalEnvironment final : public Environment {
 public:
  explicit ExternalEnvironment(std::unique_ptr<LineChannel> channel);

  const EnvSpec& spec() const override { return spec_; }
  Vector reset() override;
  StepResult step(const Vector& action) override;

 private:
  StepResult exchange(const std::string& request);

  std::unique_ptr<LineChannel> channel_;
  EnvSpec spec_;
};

std::unique_ptr<Environment> make_external_environment(const std::string& command);

}  // namespace owqe
