#pragma once

#include <stdexcept>
#include <string>

namespace anchorgk {

// Base of every exception thrown by the library. The CLI maps the subclasses
// onto exit codes, so keep the hierarchy flat.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ConflictError : public Error { using Error::Error; };
class ReferenceError : public Error { using Error::Error; };
class ArgumentError : public Error { using Error::Error; };
class ShapeError : public Error { using Error::Error; };
class GeometryError : public Error { using Error::Error; };
class NumericError : public Error { using Error::Error; };
class StateError : public Error { using Error::Error; };
class AvailabilityError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };

std::string shape_string(long rows, long cols);

}  // namespace anchorgk
