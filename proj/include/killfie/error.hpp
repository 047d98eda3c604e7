#pragma once

#include <stdexcept>
#include <string>

namespace killfie {

/// Base of all library failures. The category maps onto CLI exit codes.
class Error : public std::runtime_error {
public:
    enum class Kind { InvalidArgument = 1, Config = 2, Provider = 3, Data = 4 };

    Error(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

class InvalidArgument : public Error {
public:
    explicit InvalidArgument(const std::string& what) : Error(Kind::InvalidArgument, what) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(Kind::Config, what) {}
};

/// Raised when an external provider cannot answer. Retryable failures are
/// retried by the caching wrappers before a feature is marked missing.
class ProviderError : public Error {
public:
    ProviderError(const std::string& what, bool retryable = true)
        : Error(Kind::Provider, what), retryable_(retryable) {}

    bool retryable() const noexcept { return retryable_; }

private:
    bool retryable_;
};

class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(Kind::Data, what) {}
};

}  // namespace killfie
