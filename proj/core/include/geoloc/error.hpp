#pragma once

#include <stdexcept>
#include <string>

namespace geoloc {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation (negative
/// distance, latitude beyond the poles, empty batch, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Matrix or vector dimensions that do not compose.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf produced or consumed where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed file, unknown id, or other data-level inconsistency.
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace geoloc
