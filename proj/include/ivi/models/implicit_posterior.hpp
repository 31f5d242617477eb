#pragma once

#include <functional>
#include <span>
#include <vector>

#include "ivi/models/latent_model.hpp"
#include "ivi/numerics/mlp.hpp"

namespace ivi {

// q(z | x) defined only through its sampler z = g(features(x), eps), eps ~ N(0, I).
// No density is ever evaluated.
struct ImplicitPosterior {
    MlpParams generator;
    std::uint32_t noise_dim = 8;
    std::uint32_t latent_dim = 0;
    std::function<std::vector<double>(double)> features;

    static ImplicitPosterior make(const LatentVariableModel& model, std::uint32_t noise_dim,
                                  std::span<const std::uint32_t> hidden, Activation act, Rng& rng) {
        ImplicitPosterior q;
        q.noise_dim = noise_dim;
        q.latent_dim = model.latent_dim;
        q.features = model.features;
        q.generator = MlpParams::make(model.feature_dim() + noise_dim, hidden, act, model.latent_dim);
        q.generator.init_glorot(rng);
        return q;
    }

    std::uint32_t input_dim() const { return generator.input_dim(); }

    // Rows [features(x_b), eps_b] for a batch of observations and noise (B x noise_dim).
    std::vector<double> inputs(std::span<const double> xs, std::span<const double> noise) const {
        if (noise.size() != xs.size() * noise_dim) throw ConfigError("ImplicitPosterior: noise shape mismatch");
        std::vector<double> in;
        in.reserve(xs.size() * input_dim());
        for (std::size_t b = 0; b < xs.size(); ++b) {
            const auto f = features(xs[b]);
            in.insert(in.end(), f.begin(), f.end());
            in.insert(in.end(), noise.begin() + b * noise_dim, noise.begin() + (b + 1) * noise_dim);
        }
        if (in.size() != xs.size() * input_dim()) throw ConfigError("ImplicitPosterior: feature size mismatch");
        return in;
    }

    std::vector<double> draw_noise(Rng& rng, std::size_t n) const {
        std::vector<double> eps(n * noise_dim);
        for (auto& e : eps) e = rng.normal();
        return eps;
    }

    // One latent per observation, row-major B x latent_dim.
    std::vector<double> sample(std::span<const double> xs, Rng& rng) const {
        const auto eps = draw_noise(rng, xs.size());
        return mlp_forward_batch(generator, inputs(xs, eps), xs.size());
    }

    // Differentiable counterpart: the generator bound to a tape, evaluated on given noise.
    Block sample_on_tape(const BoundMlp& g, Tape& tape, std::span<const double> xs,
                         std::span<const double> noise) const {
        const auto in = inputs(xs, noise);
        return g.apply(tape.leaves(in, static_cast<std::uint32_t>(xs.size()), input_dim()));
    }
};

// n samples from q(. | x), row-major n x latent_dim.
inline std::vector<double> posterior_sample(const ImplicitPosterior& q, double x, Rng& rng, std::size_t n) {
    const std::vector<double> xs(n, x);
    return q.sample(xs, rng);
}

}  // namespace ivi
