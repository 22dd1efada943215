#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ensmooth {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller-supplied value violates an operation's precondition.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// A problem is structurally unsolvable (e.g. a singular flow system).
class SetupError : public Error {
 public:
  using Error::Error;
};

/// Iterative solver failure or an ill-conditioned linear system.
class NumericError : public Error {
 public:
  using Error::Error;
};

class LoadError : public Error {
 public:
  using Error::Error;
};

class MalformedManifest : public LoadError {
 public:
  using LoadError::LoadError;
};

class DimensionMismatch : public LoadError {
 public:
  using LoadError::LoadError;
};

class TruncatedPayload : public LoadError {
 public:
  using LoadError::LoadError;
};

class ChecksumMismatch : public LoadError {
 public:
  using LoadError::LoadError;
};

/// Raised by the assimilation loop when a member's forward run fails.
class ForwardModelError : public Error {
 public:
  ForwardModelError(std::size_t member, const std::string& what)
      : Error("forward model failed for member " + std::to_string(member) +
              ": " + what),
        member_(member) {}

  std::size_t member() const noexcept { return member_; }

 private:
  std::size_t member_;
};

}  // namespace ensmooth
