#pragma once

// Reverse-mode automatic differentiation over scalar nodes.
//
// Every value lives in a Tape as a scalar node with its own adjoint. Scalar
// operations record their parents together with the local partial derivatives;
// whole-layer operations (affine maps, elementwise activations, gathers) are
// recorded as a single entry that updates many node adjoints at once. Nodes are
// append-only, so creation order is a topological order and backward() walks the
// records once, in reverse.

#include <cassert>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "ivi/numerics/math.hpp"

namespace ivi {

class Tape;

using NodeId = std::uint32_t;

struct Var {
    Tape* tape = nullptr;
    NodeId id = 0;

    double value() const;
    double adjoint() const;
};

// A contiguous rows x cols (row-major) run of nodes on one tape.
struct Block {
    Tape* tape = nullptr;
    NodeId first = 0;
    std::uint32_t rows = 0;
    std::uint32_t cols = 0;

    std::size_t size() const { return std::size_t{rows} * cols; }
    Var operator[](std::size_t i) const { return {tape, static_cast<NodeId>(first + i)}; }
    Var at(std::size_t r, std::size_t c) const { return (*this)[r * cols + c]; }
};

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    std::size_t size() const { return values_.size(); }

    Var variable(double v) {
        values_.push_back(v);
        adjoints_.push_back(0.0);
        return {this, static_cast<NodeId>(values_.size() - 1)};
    }

    Block leaves(std::span<const double> vals, std::uint32_t rows, std::uint32_t cols) {
        if (vals.size() != std::size_t{rows} * cols)
            throw std::invalid_argument("Tape::leaves: value count does not match shape");
        const auto first = static_cast<NodeId>(values_.size());
        values_.insert(values_.end(), vals.begin(), vals.end());
        adjoints_.resize(values_.size(), 0.0);
        return {this, first, rows, cols};
    }

    Block leaves(std::span<const double> vals) {
        return leaves(vals, static_cast<std::uint32_t>(vals.size()), 1);
    }

    double value(NodeId id) const { return values_[id]; }
    double adjoint(NodeId id) const { return adjoints_[id]; }
    std::span<const double> values(const Block& b) const { return {values_.data() + b.first, b.size()}; }
    std::span<const double> adjoints(const Block& b) const { return {adjoints_.data() + b.first, b.size()}; }

    Var unary(Var a, double v, double da) {
        Var out = variable(v);
        assert(a.id < out.id);
        records_.push_back({out.id, a.id, kNone, da, 0.0, kNone});
        return out;
    }

    Var binary(Var a, Var b, double v, double da, double db) {
        Var out = variable(v);
        assert(a.id < out.id && b.id < out.id);
        records_.push_back({out.id, a.id, b.id, da, db, kNone});
        return out;
    }

    // out[r, o] = bias[o] + sum_i weight[o, i] * in[r, i]
    // When train_params is false the weight and bias adjoints are never touched.
    Block affine(const Block& in, const Block& weight, const Block& bias, bool train_params) {
        if (weight.cols != in.cols || bias.size() != weight.rows)
            throw std::invalid_argument("Tape::affine: shape mismatch");
        const std::uint32_t rows = in.rows, n_in = in.cols, n_out = weight.rows;
        Block out = fresh(rows, n_out);
        const double* x = values_.data() + in.first;
        const double* w = values_.data() + weight.first;
        const double* b = values_.data() + bias.first;
        double* y = values_.data() + out.first;
        for (std::uint32_t r = 0; r < rows; ++r) {
            for (std::uint32_t o = 0; o < n_out; ++o) {
                double acc = b[o];
                const double* wrow = w + std::size_t{o} * n_in;
                const double* xrow = x + std::size_t{r} * n_in;
                for (std::uint32_t i = 0; i < n_in; ++i) acc += wrow[i] * xrow[i];
                y[std::size_t{r} * n_out + o] = acc;
            }
        }
        push_block([=](Tape& t) {
            const double* xv = t.values_.data() + in.first;
            const double* wv = t.values_.data() + weight.first;
            const double* gy = t.adjoints_.data() + out.first;
            double* gx = t.adjoints_.data() + in.first;
            double* gw = t.adjoints_.data() + weight.first;
            double* gb = t.adjoints_.data() + bias.first;
            for (std::uint32_t r = 0; r < rows; ++r) {
                const double* xrow = xv + std::size_t{r} * n_in;
                double* gxrow = gx + std::size_t{r} * n_in;
                for (std::uint32_t o = 0; o < n_out; ++o) {
                    const double g = gy[std::size_t{r} * n_out + o];
                    if (g == 0.0) continue;
                    const double* wrow = wv + std::size_t{o} * n_in;
                    for (std::uint32_t i = 0; i < n_in; ++i) gxrow[i] += wrow[i] * g;
                    if (train_params) {
                        double* gwrow = gw + std::size_t{o} * n_in;
                        for (std::uint32_t i = 0; i < n_in; ++i) gwrow[i] += xrow[i] * g;
                        gb[o] += g;
                    }
                }
            }
        });
        return out;
    }

    Block map_tanh(const Block& in) {
        Block out = fresh(in.rows, in.cols);
        for (std::size_t i = 0; i < in.size(); ++i) values_[out.first + i] = std::tanh(values_[in.first + i]);
        push_block([=](Tape& t) {
            for (std::size_t i = 0; i < in.size(); ++i) {
                const double y = t.values_[out.first + i];
                t.adjoints_[in.first + i] += (1.0 - y * y) * t.adjoints_[out.first + i];
            }
        });
        return out;
    }

    Block map_relu(const Block& in) {
        Block out = fresh(in.rows, in.cols);
        for (std::size_t i = 0; i < in.size(); ++i) values_[out.first + i] = relu(values_[in.first + i]);
        push_block([=](Tape& t) {
            for (std::size_t i = 0; i < in.size(); ++i)
                if (t.values_[in.first + i] > 0) t.adjoints_[in.first + i] += t.adjoints_[out.first + i];
        });
        return out;
    }

    // Copies arbitrary nodes into a fresh contiguous rows x cols block.
    Block gather(std::span<const Var> src, std::uint32_t rows, std::uint32_t cols) {
        if (src.size() != std::size_t{rows} * cols) throw std::invalid_argument("Tape::gather: shape mismatch");
        std::vector<NodeId> ids(src.size());
        Block out = fresh(rows, cols);
        for (std::size_t i = 0; i < src.size(); ++i) {
            ids[i] = src[i].id;
            values_[out.first + i] = values_[src[i].id];
        }
        push_block([ids = std::move(ids), out](Tape& t) {
            for (std::size_t i = 0; i < ids.size(); ++i) t.adjoints_[ids[i]] += t.adjoints_[out.first + i];
        });
        return out;
    }

    // [a | b] along columns; a and b must have the same number of rows.
    Block concat_cols(const Block& a, const Block& b) {
        if (a.rows != b.rows) throw std::invalid_argument("Tape::concat_cols: row mismatch");
        std::vector<Var> src;
        src.reserve(a.size() + b.size());
        for (std::uint32_t r = 0; r < a.rows; ++r) {
            for (std::uint32_t c = 0; c < a.cols; ++c) src.push_back(a.at(r, c));
            for (std::uint32_t c = 0; c < b.cols; ++c) src.push_back(b.at(r, c));
        }
        return gather(src, a.rows, a.cols + b.cols);
    }

    Var sum(const Block& b) {
        Block out = fresh(1, 1);
        double acc = 0.0;
        for (std::size_t i = 0; i < b.size(); ++i) acc += values_[b.first + i];
        values_[out.first] = acc;
        push_block([=](Tape& t) {
            const double g = t.adjoints_[out.first];
            for (std::size_t i = 0; i < b.size(); ++i) t.adjoints_[b.first + i] += g;
        });
        return out[0];
    }

    // Zeroes every adjoint, seeds d(output)/d(output) = 1 and propagates.
    void backward(Var output) {
        if (output.tape != this || output.id >= values_.size())
            throw std::invalid_argument("Tape::backward: output does not belong to this tape");
        std::fill(adjoints_.begin(), adjoints_.end(), 0.0);
        adjoints_[output.id] = 1.0;
        for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
            if (it->block != kNone) {
                blocks_[it->block](*this);
                continue;
            }
            const double g = adjoints_[it->out];
            if (g == 0.0) continue;
            adjoints_[it->a] += it->da * g;
            if (it->b != kNone) adjoints_[it->b] += it->db * g;
        }
    }

private:
    static constexpr NodeId kNone = std::numeric_limits<NodeId>::max();

    struct Record {
        NodeId out, a, b;
        double da, db;
        NodeId block;
    };

    Block fresh(std::uint32_t rows, std::uint32_t cols) {
        const auto first = static_cast<NodeId>(values_.size());
        values_.resize(values_.size() + std::size_t{rows} * cols, 0.0);
        adjoints_.resize(values_.size(), 0.0);
        return {this, first, rows, cols};
    }

    void push_block(std::function<void(Tape&)> fn) {
        blocks_.push_back(std::move(fn));
        records_.push_back({kNone, kNone, kNone, 0.0, 0.0, static_cast<NodeId>(blocks_.size() - 1)});
    }

    std::vector<double> values_;
    std::vector<double> adjoints_;
    std::vector<Record> records_;
    std::vector<std::function<void(Tape&)>> blocks_;
};

inline double Var::value() const { return tape->value(id); }
inline double Var::adjoint() const { return tape->adjoint(id); }

// Scalar arithmetic. Mixing a Var with a double treats the double as a constant.

inline Var operator+(Var a, Var b) { return a.tape->binary(a, b, a.value() + b.value(), 1.0, 1.0); }
inline Var operator-(Var a, Var b) { return a.tape->binary(a, b, a.value() - b.value(), 1.0, -1.0); }
inline Var operator*(Var a, Var b) { return a.tape->binary(a, b, a.value() * b.value(), b.value(), a.value()); }
inline Var operator/(Var a, Var b) {
    const double inv = 1.0 / b.value();
    return a.tape->binary(a, b, a.value() * inv, inv, -a.value() * inv * inv);
}
inline Var operator-(Var a) { return a.tape->unary(a, -a.value(), -1.0); }

inline Var operator+(Var a, double c) { return a.tape->unary(a, a.value() + c, 1.0); }
inline Var operator+(double c, Var a) { return a + c; }
inline Var operator-(Var a, double c) { return a.tape->unary(a, a.value() - c, 1.0); }
inline Var operator-(double c, Var a) { return a.tape->unary(a, c - a.value(), -1.0); }
inline Var operator*(Var a, double c) { return a.tape->unary(a, a.value() * c, c); }
inline Var operator*(double c, Var a) { return a * c; }
inline Var operator/(Var a, double c) { return a * (1.0 / c); }
inline Var operator/(double c, Var a) {
    const double inv = 1.0 / a.value();
    return a.tape->unary(a, c * inv, -c * inv * inv);
}

inline Var exp(Var a) {
    const double e = std::exp(a.value());
    return a.tape->unary(a, e, e);
}
inline Var log(Var a) { return a.tape->unary(a, std::log(a.value()), 1.0 / a.value()); }
inline Var log1p(Var a) { return a.tape->unary(a, std::log1p(a.value()), 1.0 / (1.0 + a.value())); }
inline Var tanh(Var a) {
    const double y = std::tanh(a.value());
    return a.tape->unary(a, y, 1.0 - y * y);
}
inline Var relu(Var a) { return a.tape->unary(a, relu(a.value()), a.value() > 0 ? 1.0 : 0.0); }
inline Var square(Var a) { return a.tape->unary(a, a.value() * a.value(), 2.0 * a.value()); }
inline Var softplus(Var a) { return a.tape->unary(a, softplus(a.value()), sigmoid(a.value())); }
inline Var softminus(Var a) { return a.tape->unary(a, softminus(a.value()), sigmoid(-a.value())); }

inline double square(double a) { return a * a; }

}  // namespace ivi
