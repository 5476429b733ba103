#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace hybridgen {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInputError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// The composed domain direction has (near) zero length, usually because a
// reference embeds to the same point as the source anchor.
class DegenerateDomainError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class CheckpointFormatError : public Error {
 public:
  using Error::Error;
};

class UnsupportedVersionError : public CheckpointFormatError {
 public:
  UnsupportedVersionError(const std::string& what, std::uint32_t version)
      : CheckpointFormatError(what), version_(version) {}
  std::uint32_t version() const noexcept { return version_; }

 private:
  std::uint32_t version_;
};

class DirectionFormatError : public Error {
 public:
  using Error::Error;
};

class FrozenHandleError : public Error {
 public:
  using Error::Error;
};

class TrainingDivergedError : public Error {
 public:
  TrainingDivergedError(const std::string& what, std::int64_t iteration)
      : Error(what), iteration_(iteration) {}
  std::int64_t iteration() const noexcept { return iteration_; }

 private:
  std::int64_t iteration_;
};

// Config validation failure. key_path names the offending entry, e.g.
// "domains[1].coefficient".
class ConfigError : public Error {
 public:
  ConfigError(const std::string& key_path, const std::string& message)
      : Error(key_path + ": " + message), key_path_(key_path) {}
  const std::string& key_path() const noexcept { return key_path_; }

 private:
  std::string key_path_;
};

}  // namespace hybridgen
