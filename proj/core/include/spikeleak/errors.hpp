#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace spikeleak {

/// Shapes of operands do not line up.
class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An API was called in a way its contract forbids.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value is outside the domain accepted by an operation.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Two parties of the federated exchange disagree (e.g. model spec hashes).
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed bytes in a parsed file. Carries the byte offset at which parsing failed.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t offset);

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace spikeleak
