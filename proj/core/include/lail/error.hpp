#pragma once

#include <stdexcept>
#include <string>

namespace lail {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad caller input: dimension mismatch, violated precondition, bad parameter.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent data on disk (datasets, labels, checkpoints).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Pipeline configuration is invalid or incomplete.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A stage was asked to run before the artifact it consumes exists.
class ArtifactMissingError : public Error {
 public:
  using Error::Error;
};

/// Any failure reported by, or while talking to, an LLM provider.
class ProviderError : public Error {
 public:
  using Error::Error;
};

/// Connection failures and non-2xx responses that survived all retries.
class TransportError : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

/// The provider cannot do what was asked (e.g. no echo/logprob support).
class CapabilityError : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

/// The provider dropped part of the scored continuation.
class TruncationError : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

/// A 2xx response whose body does not have the documented shape.
class ProtocolError : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

}  // namespace lail
