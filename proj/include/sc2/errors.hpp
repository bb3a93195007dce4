#pragma once

#include <stdexcept>
#include <string>

namespace sc2 {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Model output (or other text) could not be parsed into the expected shape.
class ParseError : public Error {
public:
    using Error::Error;
};

/// A domain value violates its structural invariants.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A run configuration is unusable (bad file, illegal option combination).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Dataset ingest problem, carries the 1-based line number when known.
class FormatError : public Error {
public:
    FormatError(const std::string& msg, long line)
        : Error(msg + " (line " + std::to_string(line) + ")"), line_(line) {}
    explicit FormatError(const std::string& msg) : Error(msg), line_(-1) {}
    long line() const { return line_; }

private:
    long line_;
};

/// Two dataset rows share an id.
class DuplicateIdError : public Error {
public:
    using Error::Error;
};

/// Retryable backend transport failure.
class TransportError : public Error {
public:
    using Error::Error;
};

/// Non-retryable backend rejection (quota, auth).
class QuotaError : public Error {
public:
    using Error::Error;
};

/// Mock backend could not serve a request (no matching rule, or queue empty).
class MockError : public Error {
public:
    using Error::Error;
};

/// Backend failed after all retries were spent.
class GenerationError : public Error {
public:
    using Error::Error;
};

/// Offline aspect consolidation did not produce exactly five phrases.
class ConsolidationError : public Error {
public:
    using Error::Error;
};

/// A phrase reduced to nothing under canonicalization.
class CanonicalizationError : public Error {
public:
    using Error::Error;
};

/// A prompt template referenced a placeholder that was not bound.
class TemplateError : public Error {
public:
    using Error::Error;
};

} // namespace sc2
