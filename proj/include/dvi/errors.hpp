#pragma once

#include <stdexcept>
#include <string>

namespace dvi {

// Process exit codes used by the CLI. Library code throws; the CLI maps.
enum class ErrorCode : int {
  kConfig = 2,
  kData = 3,
  kNumerical = 4,
  kInvariant = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& msg)
      : std::runtime_error(msg), code_(code) {}
  ErrorCode code() const { return code_; }
  int exit_code() const { return static_cast<int>(code_); }

 private:
  ErrorCode code_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(ErrorCode::kConfig, msg) {}
};

struct DataError : Error {
  explicit DataError(const std::string& msg) : Error(ErrorCode::kData, msg) {}
};

struct NumericalError : Error {
  explicit NumericalError(const std::string& msg) : Error(ErrorCode::kNumerical, msg) {}
};

struct InvariantError : Error {
  explicit InvariantError(const std::string& msg) : Error(ErrorCode::kInvariant, msg) {}
};

}  // namespace dvi
