#pragma once

#include <stdexcept>
#include <string>

namespace kru {

/// Input data violates a structural precondition (NaN/Inf weight, bad dimension, ...).
struct InvalidMeasure : std::runtime_error {
    explicit InvalidMeasure(const std::string& what) : std::runtime_error(what) {}
};

/// A scalar or enum parameter is outside its admissible range.
struct InvalidParameter : std::runtime_error {
    explicit InvalidParameter(const std::string& what) : std::runtime_error(what) {}
};

/// Two objects live on different pointed spaces (dimension, base point or metric exponent differ).
struct SpaceMismatch : std::runtime_error {
    explicit SpaceMismatch(const std::string& what) : std::runtime_error(what) {}
};

/// An operation requiring balanced or mass-matched input received something else.
struct UnbalancedInput : std::runtime_error {
    explicit UnbalancedInput(const std::string& what) : std::runtime_error(what) {}
};

/// The exhaustive reference oracle was asked for an instance above its size cap.
struct OracleSizeExceeded : std::runtime_error {
    explicit OracleSizeExceeded(const std::string& what) : std::runtime_error(what) {}
};

/// The extremal normalization equation has no positive solution.
struct DegenerateExtremal : std::runtime_error {
    explicit DegenerateExtremal(const std::string& what) : std::runtime_error(what) {}
};

/// A computed certificate failed its own exactness check; results are not trustworthy.
struct NumericalFailure : std::runtime_error {
    explicit NumericalFailure(const std::string& what) : std::runtime_error(what) {}
};

} // namespace kru
