#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace ffpsurv {

// Input that violates a data or file contract. Maps to exit code 1.
class validation_error : public std::runtime_error {
public:
    explicit validation_error(const std::string& what, std::optional<std::size_t> row = std::nullopt)
        : std::runtime_error(row ? what + " (row " + std::to_string(*row) + ")" : what), row_(row) {}

    std::optional<std::size_t> row() const noexcept { return row_; }

private:
    std::optional<std::size_t> row_;
};

// Objective, quadrature or root-finding failure. Maps to exit code 2.
class numerical_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class dimension_error : public validation_error {
public:
    dimension_error(const std::string& context, std::size_t expected, std::size_t got)
        : validation_error(context + ": dimension mismatch, expected " + std::to_string(expected) +
                           " but got " + std::to_string(got)),
          expected_(expected), got_(got) {}

    std::size_t expected() const noexcept { return expected_; }
    std::size_t got() const noexcept { return got_; }

private:
    std::size_t expected_;
    std::size_t got_;
};

} // namespace ffpsurv
