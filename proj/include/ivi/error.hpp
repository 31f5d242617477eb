#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ivi {

// Malformed input or an impossible configuration (bad dimensions, unknown keys,
// missing model capabilities). The CLI maps this to exit code 2.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A computation produced a non-finite value. The CLI maps this to exit code 3.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what, std::ptrdiff_t step = -1)
        : std::runtime_error(step >= 0 ? what + " (step " + std::to_string(step) + ")" : what),
          step_(step) {}

    std::ptrdiff_t step() const noexcept { return step_; }

private:
    std::ptrdiff_t step_;
};

}  // namespace ivi
