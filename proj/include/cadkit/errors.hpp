#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cadkit {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text (OBJ, JSON). Carries the 1-based line number when known.
class ParseError : public Error {
public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

/// Well-formed input that violates a schema or domain invariant. `path` names the offending field.
class SchemaError : public Error {
public:
  SchemaError(std::string path, const std::string& what)
      : Error(path + ": " + what), path_(std::move(path)), detail_(what) {}

  const std::string& path() const noexcept { return path_; }
  const std::string& detail() const noexcept { return detail_; }

private:
  std::string path_;
  std::string detail_;
};

class DegenerateError : public Error {
public:
  using Error::Error;
};

class UnderdeterminedError : public Error {
public:
  using Error::Error;
};

class MissingCameraError : public Error {
public:
  using Error::Error;
};

class NonFiniteLossError : public Error {
public:
  NonFiniteLossError(int start_index)
      : Error("non-finite loss in start " + std::to_string(start_index)), start_index_(start_index) {}

  int start_index() const noexcept { return start_index_; }

private:
  int start_index_;
};

class TransitionError : public Error {
public:
  using Error::Error;
};

class VersionConflictError : public Error {
public:
  using Error::Error;
};

class PayloadError : public Error {
public:
  using Error::Error;
};

class NotFoundError : public Error {
public:
  using Error::Error;
};

}  // namespace cadkit
