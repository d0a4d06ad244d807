#pragma once

#include <stdexcept>
#include <string>

namespace pous {

/// Input that violates an operation's precondition (bad index, unknown class, out-of-range value).
class RejectedInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Invalid configuration detected before any work starts.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A two-party protocol run could not complete (group failure, bad message).
class ProtocolAbort : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Garbled circuit evaluation found zero or several valid decryptions at a gate.
class CorruptedCircuit : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Block flag field whose first bit is clear or that has no set bit.
class MalformedFlag : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace pous
