#pragma once

#include <stdexcept>
#include <string>

namespace xview {

// Error taxonomy shared across the library. The CLI maps these onto exit
// codes: config/usage -> 1, numeric -> 2, io -> 3.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape disagreement between operands.
struct dimension_error : error {
    using error::error;
};

// Bad user-facing configuration (unknown key, out-of-range value, ...).
struct config_error : error {
    using error::error;
};

// Arithmetic failure: division by zero, NaN loss, gradient check failure.
struct numeric_error : error {
    using error::error;
};

// Inconsistent data: label out of range, empty gallery, ...
struct data_error : error {
    using error::error;
};

// Batch too small for batch statistics (b < 2).
struct degenerate_batch_error : data_error {
    using data_error::data_error;
};

// API misuse: backward() on a consumed tape, non-scalar loss root.
struct contract_error : error {
    using error::error;
};

struct io_error : error {
    using error::error;
};

}  // namespace xview
