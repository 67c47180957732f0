#pragma once

#include <stdexcept>
#include <string>

namespace csrag {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// A caller violated an operation's precondition (empty prompt, k < 1, ...).
class PreconditionError : public Error {
  public:
    using Error::Error;
};

/// Malformed configuration or input records.
class ValidationError : public Error {
  public:
    using Error::Error;
};

/// Files that cannot be read or written.
class IoError : public Error {
  public:
    using Error::Error;
};

/// A persisted artifact (index snapshot, run manifest) has an incompatible format.
class IncompatibleArtifactError : public Error {
  public:
    using Error::Error;
};

enum class ProviderErrorKind { Auth, Timeout, Http, Protocol, Precondition };

/// Terminal failure of a remote provider call after retries.
class ProviderError : public Error {
  public:
    ProviderError(ProviderErrorKind kind, std::string request_id, const std::string& what)
        : Error(what), kind_(kind), request_id_(std::move(request_id)) {}

    [[nodiscard]] ProviderErrorKind kind() const noexcept { return kind_; }
    [[nodiscard]] const std::string& request_id() const noexcept { return request_id_; }

  private:
    ProviderErrorKind kind_;
    std::string request_id_;
};

}  // namespace csrag
