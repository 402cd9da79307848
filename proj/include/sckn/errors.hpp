#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace sckn {

// Thrown when a symmetric matrix turns out not to be positive definite
// where the algebra requires it (whitening, preconditioners).
struct SingularMatrixError : std::runtime_error {
  explicit SingularMatrixError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad or insufficient input data (degenerate patches, empty datasets, ...).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed file. `offset` is the byte position that failed, -1 if unknown.
struct FormatError : std::runtime_error {
  FormatError(const std::string& msg, long long offset_ = -1)
      : std::runtime_error(offset_ >= 0 ? msg + " (byte offset " + std::to_string(offset_) + ")"
                                        : msg),
        offset(offset_) {}
  long long offset;
};

// Iterative solver ran out of iterations; carries the last iterate.
struct ConvergenceError : std::runtime_error {
  ConvergenceError(const std::string& msg, Eigen::MatrixXd last_iterate_)
      : std::runtime_error(msg), last_iterate(std::move(last_iterate_)) {}
  Eigen::MatrixXd last_iterate;
};

// Sphere step produced a zero vector before projection.
struct StepDegenerateError : std::runtime_error {
  explicit StepDegenerateError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace sckn
