#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace pseg {

/// Caller passed something that violates an operation's precondition.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Bytes on disk do not follow the tensor-bundle layout.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::string tensor_name, std::uint64_t offset)
      : std::runtime_error(what + " (tensor '" + tensor_name + "', offset " +
                           std::to_string(offset) + ")"),
        name_(std::move(tensor_name)),
        offset_(offset) {}

  const std::string& tensor_name() const noexcept { return name_; }
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::string name_;
  std::uint64_t offset_;
};

/// A named tensor is absent from a bundle.
class LookupError : public std::out_of_range {
 public:
  explicit LookupError(const std::string& name)
      : std::out_of_range("tensor not found: '" + name + "'"), name_(name) {}
  const std::string& tensor_name() const noexcept { return name_; }

 private:
  std::string name_;
};

/// The reference mask vanishes at feature resolution.
class DegenerateMaskError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Weights do not match the configured architecture.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dataset directory layout is malformed.
class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input file could not be read/decoded or output could not be written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pseg

namespace pseg {

/// Optimization produced a non-finite value.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pseg
