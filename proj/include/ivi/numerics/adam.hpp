#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ivi/error.hpp"

namespace ivi {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    AdamConfig config;
    std::vector<double> first_moment;
    std::vector<double> second_moment;
    std::uint64_t step = 0;

    AdamState() = default;
    AdamState(std::size_t n, AdamConfig cfg) : config(cfg), first_moment(n, 0.0), second_moment(n, 0.0) {}

    void reset() {
        std::fill(first_moment.begin(), first_moment.end(), 0.0);
        std::fill(second_moment.begin(), second_moment.end(), 0.0);
        step = 0;
    }
};

// One bias-corrected Adam descent step. `name` labels the parameter vector in
// error messages. The gradient is validated before anything is modified.
inline void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads,
                      std::string_view name = "params") {
    if (params.size() != grads.size() || state.first_moment.size() != params.size())
        throw ConfigError("adam_step: shape mismatch for " + std::string(name));
    for (std::size_t i = 0; i < grads.size(); ++i)
        if (!std::isfinite(grads[i]))
            throw NumericError("non-finite gradient for " + std::string(name) + "[" + std::to_string(i) + "]");

    const auto& c = state.config;
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(c.beta1, t);
    const double correction2 = 1.0 - std::pow(c.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        double& m = state.first_moment[i];
        double& v = state.second_moment[i];
        m = c.beta1 * m + (1.0 - c.beta1) * grads[i];
        v = c.beta2 * v + (1.0 - c.beta2) * grads[i] * grads[i];
        const double m_hat = m / correction1;
        const double v_hat = v / correction2;
        params[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
}

}  // namespace ivi
