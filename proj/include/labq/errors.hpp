#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace labq {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input file does not match the declared column mapping.
class SchemaError : public Error {
public:
    using Error::Error;
};

// Data violates a domain invariant (label range, duplicate ids, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

// A response could not be parsed under the strict score format.
// Keeps the raw text so the caller can decide to re-ask or log it.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::string raw)
        : Error(what), raw_(std::move(raw)) {}
    const std::string& raw() const { return raw_; }

private:
    std::string raw_;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Endpoint unreachable or returned an unusable response after retries.
class EndpointError : public Error {
public:
    using Error::Error;
};

}  // namespace labq
