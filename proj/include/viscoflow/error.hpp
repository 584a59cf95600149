#pragma once

#include <stdexcept>
#include <string>

namespace viscoflow {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// det(grad y) <= 0 on at least one cell.
class DetGuardViolation : public Error {
 public:
  using Error::Error;
};

/// A deformation gradient left the neighborhood of the identity in which
/// linearized statements are trusted.
class OutOfNeighborhood : public Error {
 public:
  using Error::Error;
};

class SingularSystem : public Error {
 public:
  using Error::Error;
};

class GridMismatch : public Error {
 public:
  using Error::Error;
};

class AmplitudeTooLarge : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace viscoflow
