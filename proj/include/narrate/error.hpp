#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace narrate {

enum class ErrorCode {
  format,       // malformed file content
  unsupported,  // well-formed but outside what the toolkit reads
  io,
  contract,     // caller broke a precondition
  domain,       // input valid but the operation has nothing to work on
  convergence,
  limit,        // dimension or size limit exceeded
  precondition, // pipeline stage prerequisites missing
  not_found,
  validation,   // request or asset set rejected by service checks
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string detail = {})
      : std::runtime_error(message), code_(code), detail_(std::move(detail)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

/// Raised by the iterative solvers; carries the relative residual reached.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& message, double residual, int iterations)
      : Error(ErrorCode::convergence, message,
              "residual=" + std::to_string(residual) + " iterations=" + std::to_string(iterations)),
        residual_(residual),
        iterations_(iterations) {}

  double residual() const noexcept { return residual_; }
  int iterations() const noexcept { return iterations_; }

 private:
  double residual_;
  int iterations_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message, std::string detail = {}) {
  throw Error(code, message, std::move(detail));
}

inline void require(bool condition, const std::string& message) {
  if (!condition) fail(ErrorCode::contract, message);
}

}  // namespace narrate
