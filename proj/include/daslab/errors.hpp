#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace daslab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File contents do not follow the expected byte layout.
class MalformedFileError : public Error {
 public:
  using Error::Error;
};

/// A CIFAR-10 record carries a label byte outside 0..9.
class InvalidLabelError : public Error {
 public:
  InvalidLabelError(std::size_t record, int label)
      : Error("invalid label " + std::to_string(label) + " at record " + std::to_string(record)),
        record_(record) {}
  std::size_t record() const noexcept { return record_; }

 private:
  std::size_t record_;
};

/// Invalid user-provided configuration (sizes, keys, flags, step sizes).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Shapes or lengths that do not compose.
class StructuralError : public Error {
 public:
  using Error::Error;
};

/// Fewer unlabeled items remain than a selection asked for.
class PoolExhaustedError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss or gradient during optimization.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace daslab
