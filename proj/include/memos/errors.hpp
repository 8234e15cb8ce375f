#pragma once

#include <stdexcept>
#include <string>

namespace memos {

// Base class for all library errors. The CLI maps the `kind()` string into
// machine-readable error JSON on stderr.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& msg)
      : std::runtime_error(msg), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error("config", m) {}
};

struct ValidationError : Error {
  explicit ValidationError(const std::string& m) : Error("validation", m) {}
};

struct LoadError : Error {
  explicit LoadError(const std::string& m) : Error("load", m) {}
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& m) : Error("shape", m) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& m) : Error("numeric", m) {}
};

struct TrainingError : Error {
  explicit TrainingError(const std::string& m) : Error("training", m) {}
};

struct MetricError : Error {
  explicit MetricError(const std::string& m) : Error("metric", m) {}
};

// A downstream command was invoked before the stage it depends on.
struct DependencyError : Error {
  explicit DependencyError(const std::string& m) : Error("dependency", m) {}
};

// An artifact on disk was produced under a different configuration.
struct StalenessError : Error {
  explicit StalenessError(const std::string& m) : Error("staleness", m) {}
};

// Two artifacts cannot be combined (e.g. checkpoints with different class
// counts).
struct CompatibilityError : Error {
  explicit CompatibilityError(const std::string& m) : Error("compatibility", m) {}
};

}  // namespace memos
