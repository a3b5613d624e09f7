// Copyright 2026 The TextMonkey-Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace textmonkey {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A numerical precondition failed (fully masked row, zero-norm token, non-finite value).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A configuration value is invalid. `key()` names the offending setting when known.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what, std::string key = {})
      : Error(key.empty() ? what : key + ": " + what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

/// An operation parameter is outside its valid range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Malformed or out-of-range input text. `offset()` is the byte offset of the problem.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " at byte " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Weight archive problem: missing tensor, bad manifest, inconsistent offsets.
class LoadError : public Error {
 public:
  using Error::Error;
};

}  // namespace textmonkey
