#ifndef GDDM_ERROR_HPP
#define GDDM_ERROR_HPP

#include <stdexcept>
#include <string>

namespace gddm {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text. `line()` is 1-based, 0 when not applicable.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line == 0 ? what : what + " (line " + std::to_string(line) + ")"),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class BoundsError : public Error {
 public:
  using Error::Error;
};

class InvariantError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Unknown command, flag or configuration key.
class UsageError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Non-finite value encountered during numeric work.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Conditioning on an event of probability zero.
class ImpossibleEvidence : public Error {
 public:
  using Error::Error;
};

}  // namespace gddm

#endif  // GDDM_ERROR_HPP
