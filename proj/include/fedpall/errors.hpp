#pragma once

#include <stdexcept>

namespace fedpall {

// Base type for every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Operand shapes do not line up.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Input violates a mathematical precondition (bad label, empty set, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

// API misuse, e.g. a backward pass without a matching forward cache.
class UsageError : public Error {
public:
    using Error::Error;
};

// Malformed external input: CSV files, wire records.
class ParseError : public Error {
public:
    using Error::Error;
};

// Invalid or self-contradictory experiment configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Federation protocol violation (unknown client id, stale round tag, ...).
class ProtocolError : public Error {
public:
    using Error::Error;
};

// A training loop produced a non-finite loss.
class TrainingDivergenceError : public Error {
public:
    using Error::Error;
};

}  // namespace fedpall
