#pragma once

#include <stdexcept>
#include <string>

namespace cairdd {

// Base class for all library errors so callers can catch one type.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A documented precondition was broken by the caller.
struct UsageError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

// word lists / thesaurus
struct EmptyWordList : Error {
    using Error::Error;
};

struct KTooLarge : Error {
    using Error::Error;
};

struct FormatError : Error {
    FormatError(const std::string& what, std::size_t line_no)
        : Error(what + " (line " + std::to_string(line_no) + ")"), line(line_no) {}
    std::size_t line;
};

// model backends
struct BackendUnavailable : Error {
    using Error::Error;
};

struct ProtocolError : Error {
    using Error::Error;
};

struct AuthError : Error {
    using Error::Error;
};

// model output that could not be used
struct EmptyResponse : Error {
    using Error::Error;
};

struct ParseFailure : Error {
    explicit ParseFailure(const std::string& what, std::string raw_text = {})
        : Error(what), raw(std::move(raw_text)) {}
    std::string raw;  // verbatim text that failed to parse, when available
};

// rubric analysis
struct ShapeMismatch : Error {
    using Error::Error;
};

// score arithmetic
struct DegenerateRange : Error {
    using Error::Error;
};

struct OutOfRange : Error {
    using Error::Error;
};

// run statistics and persistence
struct NoSuccesses : Error {
    using Error::Error;
};

struct EmptyInput : Error {
    using Error::Error;
};

struct SchemaError : Error {
    using Error::Error;
};

}  // namespace cairdd
