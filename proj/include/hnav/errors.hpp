#pragma once

#include <stdexcept>
#include <string>

namespace hnav {

struct ShapeMismatch : std::runtime_error {
  explicit ShapeMismatch(const std::string& what) : std::runtime_error(what) {}
};

struct NonFiniteValue : std::runtime_error {
  explicit NonFiniteValue(const std::string& what) : std::runtime_error(what) {}
};

struct InvalidSize : std::runtime_error {
  explicit InvalidSize(const std::string& what) : std::runtime_error(what) {}
};

struct NoFeasiblePair : std::runtime_error {
  explicit NoFeasiblePair(const std::string& what)
      : std::runtime_error(what) {}
};

struct Unreachable : std::runtime_error {
  explicit Unreachable(const std::string& what) : std::runtime_error(what) {}
};

struct ParseError : std::runtime_error {
  int line;
  int column;
  ParseError(const std::string& what, int line_, int column_)
      : std::runtime_error(what + " at line " + std::to_string(line_) +
                           ", column " + std::to_string(column_)),
        line(line_),
        column(column_) {}
};

struct SteppedAfterDone : std::runtime_error {
  SteppedAfterDone() : std::runtime_error("step() called on a done episode") {}
};

struct InvalidResolution : std::runtime_error {
  explicit InvalidResolution(const std::string& what)
      : std::runtime_error(what) {}
};

struct NoFutureStep : std::runtime_error {
  NoFutureStep() : std::runtime_error("no future step to relabel toward") {}
};

struct EmptyBuffer : std::runtime_error {
  EmptyBuffer() : std::runtime_error("replay buffer is empty") {}
  explicit EmptyBuffer(const std::string& what) : std::runtime_error(what) {}
};

struct EmptyRecords : std::runtime_error {
  EmptyRecords() : std::runtime_error("no episode records") {}
};

struct NoWaypoints : std::runtime_error {
  NoWaypoints() : std::runtime_error("waypoint controller has no waypoints") {}
};

enum class CheckpointErrorKind { BadMagic, VersionMismatch, TruncatedFile };

struct CheckpointError : std::runtime_error {
  CheckpointErrorKind kind;
  CheckpointError(CheckpointErrorKind kind_, const std::string& what)
      : std::runtime_error(what), kind(kind_) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace hnav
