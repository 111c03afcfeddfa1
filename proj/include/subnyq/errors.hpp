#pragma once

#include <stdexcept>
#include <string>

namespace subnyq {

// Base class for all library errors so callers can catch one type.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Wrong M/N/length relationships (e.g. M > N, vector length mismatch).
struct invalid_dimensions : error {
    using error::error;
};

// Structurally malformed input (odd row count where even is required, ...).
struct invalid_shape : error {
    using error::error;
};

// Scalar argument outside its documented domain (negative lambda, pfa >= 1, ...).
struct invalid_parameter : error {
    using error::error;
};

// A numerical routine failed (factorization breakdown, non-finite result).
struct numerical_failure : error {
    using error::error;
};

// Detector has fewer than two residual coordinates left to estimate from.
struct degenerate_support : error {
    using error::error;
};

// A mathematically guaranteed property was violated at runtime; indicates an
// implementation bug rather than bad input.
struct theory_violation : error {
    using error::error;
};

// Malformed config/parameter/measurement file; message carries line/field context.
struct parse_error : error {
    using error::error;
};

struct io_error : error {
    using error::error;
};

}  // namespace subnyq
