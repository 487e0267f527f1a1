#pragma once

#include <stdexcept>
#include <string>

namespace redlesion {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid tunable or argument value (sigma <= 0, empty length set, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Raster or tensor dimensions that do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Input that carries no usable signal (empty sample set, single-level image).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// File could not be read, parsed or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Model used before training, stale caches, non-finite losses.
class ModelError : public Error {
 public:
  using Error::Error;
};

}  // namespace redlesion
