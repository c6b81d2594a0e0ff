#pragma once

#include <stdexcept>
#include <string>

namespace peakforge {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid search-space / configuration / objective definitions and documents.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Violations of the external-evaluator wire protocol (handshake, framing, ids).
class ProtocolError : public Error {
public:
    using Error::Error;
};

/// Filesystem and serialization failures (run directories, logs, exports).
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace peakforge
