#include "owqe/external_env.hpp"

#include <cmath>
#include <csignal>
#include <cstring>
#include <istream>
#include <ostream>
#include <utility>

#include <sys/wait.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "owqe/error.hpp"

namespace owqe {

namespace {

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

std::string reply_for(const StepResult& r) {
  nlohmann::json j{{"obs", to_std(r.observation)},
                   {"reward", r.reward},
                   {"terminal", r.terminal},
                   {"timeout", r.timeout}};
  return j.dump();
}

}  // namespace

EnvServer::EnvServer(std::unique_ptr<Environment> env) : env_(std::move(env)) {
  if (!env_) throw ConfigError("EnvServer needs an environment");
}

std::string EnvServer::handshake() const { return nlohmann::json{{"spec", to_json(env_->spec())}}.dump(); }

std::string EnvServer::handle(const std::string& request) {
  try {
    const auto j = nlohmann::json::parse(request);
    const auto cmd = j.at("cmd").get<std::string>();
    if (cmd == "reset") {
      StepResult r;
      r.observation = env_->reset();
      return reply_for(r);
    }
    if (cmd == "step") {
      const auto a = j.at("action").get<std::vector<double>>();
      return reply_for(env_->step(Eigen::Map<const Vector>(a.data(), static_cast<Eigen::Index>(a.size()))));
    }
    return nlohmann::json{{"error", "unknown cmd '" + cmd + "'"}}.dump();
  } catch (const std::exception& e) {
    return nlohmann::json{{"error", e.what()}}.dump();
  }
}

void EnvServer::serve(std::istream& in, std::ostream& out) {
  out << handshake() << '\n' << std::flush;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out << handle(line) << '\n' << std::flush;
  }
}

LoopbackChannel::LoopbackChannel(std::unique_ptr<Environment> env) : server_(std::move(env)) {}

void LoopbackChannel::send(const std::string& line) { pending_ = server_.handle(line); }

std::string LoopbackChannel::receive() {
  if (!handshake_sent_) {
    handshake_sent_ = true;
    return server_.handshake();
  }
  if (pending_.empty()) throw EnvironmentFault("no reply pending");
  return std::exchange(pending_, std::string{});
}

ProcessChannel::ProcessChannel(const std::string& command) {
  int in_pipe[2];
  int out_pipe[2];
  if (pipe(in_pipe) != 0) throw EnvironmentFault("pipe() failed");
  if (pipe(out_pipe) != 0) {
    close(in_pipe[0]);
    close(in_pipe[1]);
    throw EnvironmentFault("pipe() failed");
  }
  pid_ = fork();
  if (pid_ < 0) throw EnvironmentFault("fork() failed");
  if (pid_ == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    close(in_pipe[0]);
    close(in_pipe[1]);
    close(out_pipe[0]);
    close(out_pipe[1]);
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  close(in_pipe[0]);
  close(out_pipe[1]);
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  std::signal(SIGPIPE, SIG_IGN);
}

ProcessChannel::~ProcessChannel() {
  if (to_child_ >= 0) close(to_child_);
  if (from_child_ >= 0) close(from_child_);
  if (pid_ > 0) {
    int status = 0;
    waitpid(pid_, &status, 0);
  }
}

void ProcessChannel::send(const std::string& line) {
  std::string data = line + '\n';
  const char* p = data.data();
  std::size_t left = data.size();
  while (left > 0) {
    const ssize_t n = write(to_child_, p, left);
    if (n <= 0) throw EnvironmentFault("external environment closed its input");
    p += n;
    left -= static_cast<std::size_t>(n);
  }
}

std::string ProcessChannel::receive() {
  for (;;) {
    const auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    char chunk[4096];
    const ssize_t n = read(from_child_, chunk, sizeof chunk);
    if (n <= 0) throw EnvironmentFault("external environment closed its output");
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

ExternalEnvironment::ExternalEnvironment(std::unique_ptr<LineChannel> channel)
    : channel_(std::move(channel)) {
  nlohmann::json hello;
  try {
    hello = nlohmann::json::parse(channel_->receive());
  } catch (const nlohmann::json::exception& e) {
    throw EnvironmentFault(std::string("bad handshake: ") + e.what());
  }
  if (!hello.contains("spec")) throw EnvironmentFault("handshake line lacks \"spec\"");
  spec_ = env_spec_from_json(hello["spec"]);
}

StepResult ExternalEnvironment::exchange(const std::string& request) {
  channel_->send(request);
  const auto line = channel_->receive();
  StepResult r;
  try {
    const auto j = nlohmann::json::parse(line);
    if (j.contains("error")) throw EnvironmentFault("external environment: " + j["error"].get<std::string>());
    const auto obs = j.at("obs").get<std::vector<double>>();
    r.observation = Eigen::Map<const Vector>(obs.data(), static_cast<Eigen::Index>(obs.size()));
    r.reward = j.at("reward").get<double>();
    r.terminal = j.at("terminal").get<bool>();
    r.timeout = j.at("timeout").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw EnvironmentFault(std::string("malformed reply: ") + e.what());
  }
  if (r.observation.size() != spec_.observation_dim || !r.observation.allFinite() ||
      !std::isfinite(r.reward)) {
    throw EnvironmentFault("external environment returned an invalid observation");
  }
  return r;
}

Vector ExternalEnvironment::reset() { return exchange(R"({"cmd":"reset"})").observation; }

StepResult ExternalEnvironment::step(const Vector& action) {
  if (action.size() != spec_.action_dim) throw ConfigError("action dimension mismatch");
  return exchange(nlohmann::json{{"cmd", "step"}, {"action", to_std(action)}}.dump());
}

std::unique_ptr<Environment> make_external_environment(const std::string& command) {
  return std::make_unique<ExternalEnvironment>(std::make_unique<ProcessChannel>(command));
}

}  // namespace owqe
