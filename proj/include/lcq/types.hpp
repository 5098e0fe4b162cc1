#pragma once

#include <Eigen/Dense>

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace lcq {

using cplx = std::complex<double>;
using Vec3 = Eigen::Vector3d;
using VecX = Eigen::VectorXd;
using VecXc = Eigen::VectorXcd;
using MatX = Eigen::MatrixXd;
using MatXc = Eigen::MatrixXcd;

constexpr double kPi = 3.14159265358979323846;

// Error hierarchy. Each numerical stage throws its own type so that callers
// (the CLI in particular) can report which stage failed.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DomainError : Error {
  using Error::Error;
};
struct GeometryError : Error {
  using Error::Error;
};
struct QuadratureError : Error {
  using Error::Error;
};
struct ParseError : Error {
  ParseError(const std::string& msg, int line)
      : Error(msg + " (line " + std::to_string(line) + ")"), line(line) {}
  int line;
};
struct ValidationError : Error {
  using Error::Error;
};
struct ArgumentError : Error {
  using Error::Error;
};
struct UnsupportedError : Error {
  using Error::Error;
};
struct InternalError : Error {
  using Error::Error;
};

// Non-fatal diagnostics accumulated by long-running stages.
struct Warning {
  std::string stage;
  std::string message;
};

}  // namespace lcq
