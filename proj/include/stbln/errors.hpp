#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace stbln {

/// Tensor shapes that do not fit the requested operation.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Invalid model, layer or run configuration.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Violated API precondition (non-scalar loss, label out of range, ...).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Non-finite values or failed numerical verification.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file. Carries the byte offset (binary files) or the
/// 1-based line number (text files) where parsing stopped.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t position)
        : std::runtime_error(what), position_(position) {}

    std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

}  // namespace stbln
