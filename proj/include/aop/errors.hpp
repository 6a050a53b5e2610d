#pragma once

#include <stdexcept>
#include <string>

namespace aop {

// Rejected argument or shape/parameter contract violation.
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Malformed or missing data on disk.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A training loss became non-finite.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace aop
