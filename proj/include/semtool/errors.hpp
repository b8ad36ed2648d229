#pragma once

#include <stdexcept>
#include <string>

namespace semtool {

// Base for every error raised by the library. Callers that only need a
// message can catch this; the CLI maps subclasses onto exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad input from a caller: malformed config, empty query, k <= 0, ...
class UsageError : public Error {
public:
    using Error::Error;
};

// Data failed a domain check (unknown tool key, duplicate id, digest mismatch).
class ValidationError : public Error {
public:
    using Error::Error;
};

// Could not reach a peer (spawn failure, connect refused, timeout, EOF).
class TransportError : public Error {
public:
    using Error::Error;
};

// Peer answered, but not in a form we understand.
class ProtocolError : public Error {
public:
    using Error::Error;
};

class EmbeddingError : public Error {
public:
    EmbeddingError(const std::string& what, bool retriable)
        : Error(what), retriable_(retriable) {}

    bool retriable() const noexcept { return retriable_; }

private:
    bool retriable_;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

class IndexFormatError : public Error {
public:
    enum class Reason { Truncated, BadMagic, Version, Checksum, Malformed };

    IndexFormatError(Reason reason, const std::string& what)
        : Error(what), reason_(reason) {}

    Reason reason() const noexcept { return reason_; }

private:
    Reason reason_;
};

}  // namespace semtool
