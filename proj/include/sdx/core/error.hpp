#pragma once

#include <stdexcept>
#include <string>

namespace sdx {

// Failure category; the CLI maps each to a distinct exit code.
enum class ErrorKind { config, data, numerical, internal };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

struct DataError : Error {
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

struct NumericalError : Error {
  explicit NumericalError(const std::string& what) : Error(ErrorKind::numerical, what) {}
};

struct DimensionError : Error {
  explicit DimensionError(const std::string& what) : Error(ErrorKind::internal, what) {}
};

// Raised when a layer without a differentiable backward is asked to take part
// in a second-order gradient computation.
struct UnsupportedLayerError : Error {
  explicit UnsupportedLayerError(const std::string& what) : Error(ErrorKind::internal, what) {}
};

inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return 2;
    case ErrorKind::data: return 3;
    case ErrorKind::numerical: return 4;
    case ErrorKind::internal: return 1;
  }
  return 1;
}

}  // namespace sdx
