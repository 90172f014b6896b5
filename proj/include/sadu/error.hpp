// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace sadu {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or parameter shapes do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Malformed input data (WAV headers, manifests, config files, CSV).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure; the message carries the failing path.
class IoError : public Error {
 public:
  using Error::Error;
};

/// The operation does not apply to this model (e.g. attention dump on a
/// network without attention).
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  enum class Kind { kBadMagic, kVersionMismatch, kTruncated, kInconsistent };

  CheckpointError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace sadu
