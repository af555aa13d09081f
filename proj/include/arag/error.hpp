#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace arag {

/// Base of every error raised by the library. The CLI maps subclasses onto
/// process exit codes (see exit_code()).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 2; }
};

/// Bad or inconsistent input data: malformed files, unknown ids, broken traces.
class DataError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

/// The chat/embedding backend could not produce an answer.
class BackendError : public Error {
 public:
  BackendError(std::string agent, const std::string& what)
      : Error(agent.empty() ? what : "[" + agent + "] " + what), agent_(std::move(agent)) {}

  const std::string& agent() const noexcept { return agent_; }
  int exit_code() const noexcept override { return 3; }

 private:
  std::string agent_;
};

/// Invalid arguments or configuration values.
class UsageError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 1; }
};

}  // namespace arag
