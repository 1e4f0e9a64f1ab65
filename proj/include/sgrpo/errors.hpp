#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sgrpo {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A dataset line that does not conform to the record schema.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class UnknownTokenError : public Error {
 public:
  using Error::Error;
};

class GroupTooSmallError : public Error {
 public:
  using Error::Error;
};

class EmptyEvalError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace sgrpo
