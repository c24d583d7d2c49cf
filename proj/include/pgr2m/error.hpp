#pragma once

#include <stdexcept>
#include <string>

namespace pgr2m {

// Exit codes of the command-line tool map onto these kinds.
enum class ErrorKind { validation, io, numeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ValidationError : Error {
  explicit ValidationError(const std::string& what) : Error(ErrorKind::validation, what) {}
};

// Shape disagreement between operands.
struct DimensionError : ValidationError {
  explicit DimensionError(const std::string& what) : ValidationError("dimension error: " + what) {}
};

struct ConfigError : ValidationError {
  explicit ConfigError(const std::string& what) : ValidationError("configuration error: " + what) {}
};

struct ParseError : ValidationError {
  explicit ParseError(const std::string& what) : ValidationError("parse error: " + what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorKind::io, "I/O error: " + what) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, "numeric error: " + what) {}
};

inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::validation: return 2;
    case ErrorKind::io: return 3;
    case ErrorKind::numeric: return 4;
  }
  return 1;
}

}  // namespace pgr2m
