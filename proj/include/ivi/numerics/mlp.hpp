#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ivi/error.hpp"
#include "ivi/numerics/rng.hpp"
#include "ivi/numerics/tape.hpp"

namespace ivi {

enum class Activation { identity, tanh, relu };

inline std::string to_string(Activation a) {
    switch (a) {
        case Activation::tanh: return "tanh";
        case Activation::relu: return "relu";
        default: return "identity";
    }
}

inline Activation activation_from_string(const std::string& s) {
    if (s == "tanh") return Activation::tanh;
    if (s == "relu") return Activation::relu;
    if (s == "identity") return Activation::identity;
    throw ConfigError("unknown activation '" + s + "'");
}

struct LayerShape {
    std::uint32_t in = 0;
    std::uint32_t out = 0;
    Activation activation = Activation::identity;
    std::size_t weight_offset = 0;  // out x in, row-major
    std::size_t bias_offset = 0;
};

// Feed-forward network parameters. All weights and biases live in one flat
// vector so that optimizers and the tape can treat them as a single block.
class MlpParams {
public:
    MlpParams() = default;

    // widths = {input, hidden..., output}; activations has widths.size() - 1 entries.
    MlpParams(std::span<const std::uint32_t> widths, std::span<const Activation> activations) {
        if (widths.size() < 2 || activations.size() + 1 != widths.size())
            throw ConfigError("MlpParams: need at least one layer and one activation per layer");
        std::size_t offset = 0;
        for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
            if (widths[l] == 0 || widths[l + 1] == 0) throw ConfigError("MlpParams: zero-width layer");
            LayerShape s{widths[l], widths[l + 1], activations[l], offset, 0};
            offset += std::size_t{s.in} * s.out;
            s.bias_offset = offset;
            offset += s.out;
            layers_.push_back(s);
        }
        values_.assign(offset, 0.0);
    }

    // Hidden layers share one activation; the output layer is identity.
    static MlpParams make(std::uint32_t input_dim, std::span<const std::uint32_t> hidden, Activation hidden_act,
                          std::uint32_t output_dim) {
        std::vector<std::uint32_t> widths{input_dim};
        widths.insert(widths.end(), hidden.begin(), hidden.end());
        widths.push_back(output_dim);
        std::vector<Activation> acts(hidden.size(), hidden_act);
        acts.push_back(Activation::identity);
        return MlpParams(widths, acts);
    }

    // Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
    void init_glorot(Rng& rng) {
        for (const auto& s : layers_) {
            const double limit = std::sqrt(6.0 / (s.in + s.out));
            for (std::size_t i = 0; i < std::size_t{s.in} * s.out; ++i)
                values_[s.weight_offset + i] = rng.uniform(-limit, limit);
            for (std::size_t i = 0; i < s.out; ++i) values_[s.bias_offset + i] = 0.0;
        }
    }

    std::uint32_t input_dim() const { return layers_.empty() ? 0 : layers_.front().in; }
    std::uint32_t output_dim() const { return layers_.empty() ? 0 : layers_.back().out; }
    const std::vector<LayerShape>& layers() const { return layers_; }
    std::size_t size() const { return values_.size(); }

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }

    std::span<double> weight(std::size_t l) {
        return {values_.data() + layers_[l].weight_offset, std::size_t{layers_[l].in} * layers_[l].out};
    }
    std::span<double> bias(std::size_t l) { return {values_.data() + layers_[l].bias_offset, layers_[l].out}; }

    bool same_shape(const MlpParams& o) const {
        if (layers_.size() != o.layers_.size()) return false;
        for (std::size_t l = 0; l < layers_.size(); ++l)
            if (layers_[l].in != o.layers_[l].in || layers_[l].out != o.layers_[l].out ||
                layers_[l].activation != o.layers_[l].activation)
                return false;
        return true;
    }

private:
    std::vector<LayerShape> layers_;
    std::vector<double> values_;
};

namespace detail {
inline double activate(Activation a, double v) {
    switch (a) {
        case Activation::tanh: return std::tanh(v);
        case Activation::relu: return relu(v);
        default: return v;
    }
}
}  // namespace detail

// Plain double evaluation of `rows` inputs stored row-major; no tape involved.
inline std::vector<double> mlp_forward_batch(const MlpParams& p, std::span<const double> inputs, std::size_t rows) {
    if (inputs.size() != rows * p.input_dim()) throw ConfigError("mlp_forward: input dimension mismatch");
    std::vector<double> cur(inputs.begin(), inputs.end()), next;
    const auto vals = p.values();
    for (const auto& s : p.layers()) {
        next.assign(rows * s.out, 0.0);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* x = cur.data() + r * s.in;
            for (std::uint32_t o = 0; o < s.out; ++o) {
                const double* w = vals.data() + s.weight_offset + std::size_t{o} * s.in;
                double acc = vals[s.bias_offset + o];
                for (std::uint32_t i = 0; i < s.in; ++i) acc += w[i] * x[i];
                next[r * s.out + o] = detail::activate(s.activation, acc);
            }
        }
        cur.swap(next);
    }
    return cur;
}

inline std::vector<double> mlp_forward(const MlpParams& p, std::span<const double> input) {
    return mlp_forward_batch(p, input, 1);
}

enum class ParamMode { trainable, frozen };

// Network parameters registered on a tape. A frozen binding still lets adjoints
// flow through the network into its inputs, but never into its parameters.
class BoundMlp {
public:
    BoundMlp(Tape& tape, const MlpParams& params, ParamMode mode)
        : shape_(&params), params_(tape.leaves(params.values())), mode_(mode) {}

    Block apply(const Block& input) const {
        if (input.cols != shape_->input_dim()) throw ConfigError("mlp_apply: input dimension mismatch");
        Tape& tape = *input.tape;
        Block cur = input;
        for (const auto& s : shape_->layers()) {
            Block w{params_.tape, static_cast<NodeId>(params_.first + s.weight_offset), s.out, s.in};
            Block b{params_.tape, static_cast<NodeId>(params_.first + s.bias_offset), s.out, 1};
            cur = tape.affine(cur, w, b, mode_ == ParamMode::trainable);
            if (s.activation == Activation::tanh) cur = tape.map_tanh(cur);
            else if (s.activation == Activation::relu) cur = tape.map_relu(cur);
        }
        return cur;
    }

    const Block& params() const { return params_; }
    ParamMode mode() const { return mode_; }

    std::vector<double> gradient() const {
        const auto g = params_.tape->adjoints(params_);
        return {g.begin(), g.end()};
    }

private:
    const MlpParams* shape_;
    Block params_;
    ParamMode mode_;
};

// Single-input convenience: applies a trainable binding to one input vector.
inline Block mlp_apply(const BoundMlp& net, Tape& tape, std::span<const double> input) {
    return net.apply(tape.leaves(input, 1, static_cast<std::uint32_t>(input.size())));
}

}  // namespace ivi
