#pragma once

// Helpers shared by the unit tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <vector>

#include "ivi/denoise/denoiser.hpp"
#include "ivi/models/linear_gaussian.hpp"
#include "ivi/ratio/discriminator.hpp"
#include "ivi/numerics/mlp.hpp"
#include "ivi/numerics/rng.hpp"
#include "ivi/numerics/tape.hpp"

namespace ivi::test {

// Worst relative error between tape gradients and central differences (h = 1e-5)
// over all parameters of a random 3 -> 6 -> 6 -> 2 network, on the scalar
// c . net(input) for random c and a batch of 4 inputs. Relative error uses
// max(|autodiff|, |fd|, 1e-4) as the scale so vanishing entries are compared
// absolutely.
inline double mlp_gradient_check(std::uint64_t seed, Activation act) {
    Rng rng(seed);
    const std::vector<std::uint32_t> hidden{6, 6};
    MlpParams p = MlpParams::make(3, hidden, act, 2);
    p.init_glorot(rng);
    for (auto& v : p.values()) v += 0.1 * rng.normal();  // non-zero biases too
    const std::size_t rows = 4;
    std::vector<double> in(rows * 3), c(rows * 2);
    for (auto& v : in) v = rng.normal();
    for (auto& v : c) v = rng.normal();

    auto objective = [&](const MlpParams& q) {
        const auto out = mlp_forward_batch(q, in, rows);
        double acc = 0;
        for (std::size_t i = 0; i < out.size(); ++i) acc += c[i] * out[i];
        return acc;
    };

    Tape tape;
    BoundMlp net(tape, p, ParamMode::trainable);
    const Block out = net.apply(tape.leaves(in, rows, 3));
    std::vector<Var> terms;
    for (std::size_t i = 0; i < out.size(); ++i) terms.push_back(out[i] * c[i]);
    tape.backward(tape.sum(tape.gather(terms, 1, static_cast<std::uint32_t>(terms.size()))));
    const auto grad = net.gradient();

    const double h = 1e-5;
    double worst = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        MlpParams plus = p, minus = p;
        plus.values()[k] += h;
        minus.values()[k] -= h;
        const double fd = (objective(plus) - objective(minus)) / (2 * h);
        const double scale = std::max({std::abs(fd), std::abs(grad[k]), 1e-4});
        worst = std::max(worst, std::abs(fd - grad[k]) / scale);
    }
    return worst;
}

// One-dimensional latent with N(0, 1) prior whose networks ignore x entirely.
inline LatentVariableModel gaussian_1d_model() {
    auto m = linear_gaussian_model({1.0}, 1.0);
    m.features = [](double) { return std::vector<double>{}; };
    return m;
}

// Batches from two fixed 1-D Gaussians; x is a dummy 0.
inline DiscSampler gaussian_pair_sampler(double q_mean, double q_std, double p_mean, double p_std) {
    return [=](Rng& rng, std::size_t n) {
        DiscBatch b;
        b.q_side.xs.assign(n, 0.0);
        b.p_side.xs.assign(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            b.q_side.zs.push_back(rng.normal(q_mean, q_std));
            b.p_side.zs.push_back(rng.normal(p_mean, p_std));
        }
        return b;
    };
}

// Runs `total` optimizer steps in `chunks` equal pieces with the learning rate
// decaying linearly from lr to lr * final_fraction.
template <class StepFn>
void decayed_fit(std::size_t total, std::size_t chunks, double lr, double final_fraction, StepFn&& step) {
    for (std::size_t c = 0; c < chunks; ++c) {
        const double t = chunks > 1 ? static_cast<double>(c) / static_cast<double>(chunks - 1) : 0.0;
        step(total / chunks, lr * (1.0 + (final_fraction - 1.0) * t));
    }
}

// Logistic-regression ratio for q = N(1, 1) against p = N(0, 1); the exact log
// ratio is z - 0.5.
inline RatioNet train_gaussian_ratio(std::uint64_t seed, std::size_t steps, std::size_t batch) {
    Rng rng(seed);
    const auto model = gaussian_1d_model();
    const std::vector<std::uint32_t> hidden{64, 64};
    RatioNet r = RatioNet::make(model, hidden, Activation::relu, rng);
    AdamState opt(r.net.size(), {});
    const auto sampler = gaussian_pair_sampler(1.0, 1.0, 0.0, 1.0);
    decayed_fit(steps, 10, 1e-3, 0.1, [&](std::size_t k, double lr) {
        fit_ratio(r, opt, sampler, {k, batch, lr}, rng);
    });
    return r;
}

inline double gaussian_ratio_sup_error(const RatioNet& r) {
    double worst = 0.0;
    for (int i = 0; i <= 500; ++i) {
        const double z = -2.0 + 5.0 * i / 500.0;
        worst = std::max(worst, std::abs(r(0.0, std::vector<double>{z}) - (z - 0.5)));
    }
    return worst;
}

// Unconditional denoiser fit to N(0, 1) samples at noise level sigma.
inline DenoiserNet train_gaussian_denoiser(double sigma, std::uint64_t seed, std::size_t steps, std::size_t batch) {
    Rng rng(seed);
    const auto model = gaussian_1d_model();
    const std::vector<std::uint32_t> hidden{64, 64};
    DenoiserNet u = DenoiserNet::make(model, hidden, Activation::tanh, rng, false);
    AdamState opt(u.net.size(), {});
    const DenoiseSampler sampler = [](Rng& r, std::size_t n) {
        SampleBatch b;
        b.xs.assign(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) b.zs.push_back(r.normal());
        return b;
    };
    decayed_fit(steps, 10, 1e-3, 0.02, [&](std::size_t k, double lr) {
        fit_denoiser(u, opt, sampler, {k, batch, lr}, sigma, rng);
    });
    return u;
}

// Mean |score(z) + z| over an even lattice on [-2, 2].
inline double gaussian_score_mae(const DenoiserNet& u) {
    double acc = 0.0;
    const int n = 401;
    for (int i = 0; i < n; ++i) {
        const double z = -2.0 + 4.0 * i / (n - 1);
        acc += std::abs(score_from_denoiser(u, std::vector<double>{z}, 0.0)[0] + z);
    }
    return acc / n;
}

}  // namespace ivi::test
