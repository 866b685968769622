#pragma once

#include <stdexcept>
#include <string>

namespace anglenas {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A child model with no root-to-leaf connectivity.
class InvalidChild : public Error {
public:
    using Error::Error;
};

// Valid-child sampling ran out of retries; the space is degenerate.
class SamplingExhausted : public Error {
public:
    using Error::Error;
};

class ShapeMismatch : public Error {
public:
    using Error::Error;
};

// Activations or parameters became non-finite.
class NumericalOverflow : public Error {
public:
    using Error::Error;
};

// A weight vector of total length zero (all-identity child).
class EmptyVector : public Error {
public:
    using Error::Error;
};

class ZeroNormVector : public Error {
public:
    using Error::Error;
};

// Full-graph vector construction refused: too many root-to-leaf paths.
class PathExplosion : public Error {
public:
    using Error::Error;
};

// Every live operator is its edge's sole survivor.
class NoRemovableOperator : public Error {
public:
    using Error::Error;
};

class CapExceeded : public Error {
public:
    using Error::Error;
};

class EmptySubspace : public Error {
public:
    using Error::Error;
};

class LengthMismatch : public Error {
public:
    using Error::Error;
};

class MissingBenchmark : public Error {
public:
    using Error::Error;
};

class IoFailure : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace anglenas
