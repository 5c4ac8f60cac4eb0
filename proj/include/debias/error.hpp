// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace debias {

/// Raised when caller-supplied data or configuration breaks a documented
/// precondition. The CLI maps it to exit code 2.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Tensor shapes that cannot be combined.
class ShapeError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

}  // namespace debias
