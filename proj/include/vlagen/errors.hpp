#pragma once

#include <stdexcept>
#include <string>

namespace vlagen {

/// Base of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad or inconsistent input data (maps to CLI exit code 2).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Bad configuration or usage (exit code 1).
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

// ingest
class MalformedRecord : public DataError {
 public:
  MalformedRecord(std::string stream, std::size_t line, const std::string& what)
      : DataError("malformed record in " + stream + " at line " +
                  std::to_string(line) + ": " + what),
        stream_(std::move(stream)),
        line_(line) {}
  const std::string& stream() const { return stream_; }
  std::size_t line() const { return line_; }

 private:
  std::string stream_;
  std::size_t line_;
};

class MissingStream : public DataError {
 public:
  explicit MissingStream(std::string name)
      : DataError("missing required stream: " + name), name_(std::move(name)) {}
  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

// geodesy
class DegenerateOrigin : public DataError {
 public:
  using DataError::DataError;
};

// estimation
class InvalidDt : public DataError {
 public:
  using DataError::DataError;
};
class InvalidFix : public DataError {
 public:
  using DataError::DataError;
};
class NoGnss : public DataError {
 public:
  using DataError::DataError;
};

// trajfilter / sampler / captioning
class TooShort : public DataError {
 public:
  using DataError::DataError;
};
class WrongLength : public DataError {
 public:
  using DataError::DataError;
};
class NotEnoughScenes : public DataError {
 public:
  using DataError::DataError;
};
class IncompleteTrajectory : public DataError {
 public:
  using DataError::DataError;
};
class WindowMismatch : public DataError {
 public:
  using DataError::DataError;
};

// VLM protocol. Unavailability maps to CLI exit code 3.
class VlmUnavailable : public Error {
 public:
  using Error::Error;
};
class MalformedResponse : public DataError {
 public:
  using DataError::DataError;
};
class EmptyCompletion : public DataError {
 public:
  using DataError::DataError;
};

// dataset
class FrameMismatch : public DataError {
 public:
  using DataError::DataError;
};
class SchemaViolation : public DataError {
 public:
  SchemaViolation(std::size_t line, const std::string& what)
      : DataError("schema violation at line " + std::to_string(line) + ": " +
                  what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};
class MissingCamera : public DataError {
 public:
  using DataError::DataError;
};

// eval
class LengthMismatch : public DataError {
 public:
  using DataError::DataError;
};
class EmptyTrajectory : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace vlagen
