#pragma once

#include <stdexcept>
#include <string>

namespace msv {

/// Incompatible tensor extents.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition of an operation was violated by the caller.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Malformed file header (bad magic, unsupported version or maxval).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File content is truncated or fails its checksum.
class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration (unknown key, inconsistent stage counts, ...).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid data values, e.g. a label outside the class range.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical failure during training (non-finite loss).
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace msv
