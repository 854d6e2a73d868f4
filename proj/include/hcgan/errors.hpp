#pragma once

#include <stdexcept>
#include <string>

namespace hcgan {

/// Bad input, precondition violation, or rejected configuration (CLI exit code 2).
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite value produced during computation (CLI exit code 3).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace hcgan
