#pragma once

#include <stdexcept>
#include <string>

namespace smile {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class NonFiniteError : public Error {
public:
    using Error::Error;
};

/// gradient() called on a graph whose root has not been evaluated.
class BackwardBeforeForwardError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

enum class FormatErrorKind { bad_magic, unsupported_version, truncated, checksum_mismatch, malformed };

class FormatError : public Error {
public:
    FormatError(FormatErrorKind kind, const std::string& what)
      : Error(what), m_kind(kind)
    { }

    FormatErrorKind kind() const noexcept { return m_kind; }

private:
    FormatErrorKind m_kind;
};

}  // namespace smile
