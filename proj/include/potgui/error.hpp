#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace potgui {

/// Base class for all library errors. `kind()` is a stable, machine-parseable
/// category string; `what()` carries the human-readable detail.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& msg)
        : std::runtime_error(msg), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

class InvalidInputError : public Error {
public:
    explicit InvalidInputError(const std::string& msg) : Error("invalid-input", msg) {}
};

class DivergenceError : public Error {
public:
    DivergenceError(int layer, const std::string& msg)
        : Error("divergence", msg), layer_(layer) {}

    int layer() const noexcept { return layer_; }

private:
    int layer_;
};

class ContractViolationError : public Error {
public:
    explicit ContractViolationError(const std::string& msg)
        : Error("contract-violation", msg) {}
};

class FormatError : public Error {
public:
    FormatError(std::size_t byte_offset, const std::string& msg)
        : Error("format", msg), byte_offset_(byte_offset) {}

    std::size_t byte_offset() const noexcept { return byte_offset_; }

private:
    std::size_t byte_offset_;
};

class SchemaError : public Error {
public:
    explicit SchemaError(const std::string& msg) : Error("schema", msg) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error("io", msg) {}
};

} // namespace potgui
