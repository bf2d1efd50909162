#pragma once

#include <stdexcept>
#include <string>

namespace gcnav {

/// Base for every error raised by the library. `code()` is a short stable token
/// the CLI prints so failures stay machine-parseable.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& what)
      : std::runtime_error(what), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& what) : Error("shape", what) {}
};

struct NonFiniteError : Error {
  explicit NonFiniteError(const std::string& what) : Error("non_finite", what) {}
};

struct GraphError : Error {
  explicit GraphError(const std::string& what) : Error("graph", what) {}
};

struct OffRoadError : Error {
  explicit OffRoadError(const std::string& what) : Error("off_road", what) {}
};

struct PredictionError : Error {
  explicit PredictionError(const std::string& what) : Error("malformed_prediction", what) {}
};

struct EpisodeError : Error {
  explicit EpisodeError(const std::string& what) : Error("episode", what) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error("config", what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error("io", what) {}
};

}  // namespace gcnav
