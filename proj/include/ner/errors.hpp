#pragma once

#include <stdexcept>
#include <string>

namespace ner {

// File, corpus or checkpoint content that cannot be interpreted.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values where finite arithmetic is required (diverged loss, bad input).
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Rejected inputs (contract violations) are reported as std::invalid_argument.

}  // namespace ner
