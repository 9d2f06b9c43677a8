#pragma once

#include <stdexcept>
#include <string>

namespace fgan {

inline constexpr const char* kVersion = "0.1.0";

// Base for every error the library raises on purpose. CLI maps
// ValidationError (bad input/config/usage) to exit code 2 and
// everything else to exit code 1.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& msg) : Error(msg) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

// Predictor error branches. `attribute` is filled in when the failure is
// tagged by attribute_distance or the contrastive loss.
class PredictorError : public Error {
 public:
  PredictorError(const std::string& kind, const std::string& msg)
      : Error(kind + ": " + msg), kind_(kind) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

class DegenerateMass : public PredictorError {
 public:
  explicit DegenerateMass(const std::string& msg)
      : PredictorError("DegenerateMass", msg) {}
};

class DegenerateOrientation : public PredictorError {
 public:
  explicit DegenerateOrientation(const std::string& msg)
      : PredictorError("DegenerateOrientation", msg) {}
};

class SingularFit : public PredictorError {
 public:
  explicit SingularFit(const std::string& msg)
      : PredictorError("SingularFit", msg) {}
};

class ThresholdInversion : public Error {
 public:
  explicit ThresholdInversion(const std::string& msg) : Error(msg) {}
};

class TrainingAborted : public Error {
 public:
  explicit TrainingAborted(const std::string& msg) : Error(msg) {}
};

}  // namespace fgan
