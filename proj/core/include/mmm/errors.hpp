#ifndef MMM_ERRORS_HPP
#define MMM_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace mmm {

/// Input files or argument values that violate a documented contract.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed file content; message carries row/column location when known.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numerical failure (non-PD matrix, degenerate denominator, overflow).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace mmm

#endif  // MMM_ERRORS_HPP
