#pragma once

#include <stdexcept>
#include <string>

namespace dome {

/// Base class for all errors raised by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Tensor/operation shape mismatch (inner dimensions, segment coverage, ...).
struct ShapeError : Error {
    using Error::Error;
};

/// Invalid configuration value (dimension not divisible by heads, p out of
/// range, vocabulary smaller than the reserved tokens, ...).
struct ConfigError : Error {
    using Error::Error;
};

/// Empty corpus, empty code snippet, or code with zero statements.
struct EmptyInput : Error {
    using Error::Error;
};

/// Intent label that cannot be used in the requested context (unknown string,
/// or "others" where a generatable intent is required).
struct InvalidIntent : Error {
    using Error::Error;
};

/// Retrieval partition empty after exclusion; callers fall back to an empty
/// exemplar sequence.
struct NoExemplar : Error {
    using Error::Error;
};

/// Optimizer invoked on parameters whose gradients were never populated.
struct StateError : Error {
    using Error::Error;
};

/// Checkpoint file is truncated, malformed, or has an unknown format version.
struct CorruptCheckpoint : Error {
    using Error::Error;
};

/// Softmax over a row whose entries are all masked.
struct DegenerateRow : Error {
    using Error::Error;
};

/// Input sequence longer than the configured maximum.
struct InputTooLong : Error {
    using Error::Error;
};

}  // namespace dome
