#pragma once

#include <stdexcept>
#include <string>

namespace memse {

// Every failure surfaced by the engine derives from Error. The kind decides
// the CLI exit status.
enum class ErrorKind { config = 2, infeasible = 3, numeric = 4 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct FormatError : Error {
  explicit FormatError(const std::string& what) : Error(ErrorKind::config, "format: " + what) {}
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& what) : Error(ErrorKind::config, "shape: " + what) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, "config: " + what) {}
};

struct InfeasibleError : Error {
  explicit InfeasibleError(const std::string& what) : Error(ErrorKind::infeasible, "infeasible: " + what) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, "numeric: " + what) {}
};

}  // namespace memse
