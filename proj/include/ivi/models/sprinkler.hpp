#pragma once

// The "continuous sprinkler": two a-priori independent Gaussian causes combine
// through max(0, z)^3 into the mean of an exponential observation, so a large x
// can be explained by either cause.

#include <cmath>
#include <span>
#include <vector>

#include "ivi/models/distributions.hpp"
#include "ivi/models/latent_model.hpp"

namespace ivi {

// 3 + max(0, z1)^3 + max(0, z2)^3
template <class T>
T sprinkler_mean(std::span<const T> z) {
    if (z.size() != 2) throw ConfigError("sprinkler_mean: expects a 2-vector");
    const T r1 = relu(z[0]);
    const T r2 = relu(z[1]);
    return r1 * r1 * r1 + r2 * r2 * r2 + 3.0;
}

inline double sprinkler_mean(std::span<const double> z) { return sprinkler_mean<double>(z); }

// Observation encoding for the generator and discriminators: x spans several
// orders of magnitude, so log1p(x) carries the shape and x / 10 the scale.
inline std::vector<double> sprinkler_features(double x) { return {std::log1p(x), x / 10.0}; }

inline LatentVariableModel sprinkler_model(double sigma_prior = 1.0) {
    if (!(sigma_prior > 0)) throw ConfigError("sprinkler_model: sigma_prior must be positive");
    const GaussianSpec prior = GaussianSpec::isotropic(2, 0.0, sigma_prior);

    LatentVariableModel m;
    m.name = "sprinkler";
    m.latent_dim = 2;
    m.sample_prior = [prior](Rng& rng) {
        return std::vector<double>{rng.normal(0.0, prior.std[0]), rng.normal(0.0, prior.std[1])};
    };
    m.sample_likelihood = [](std::span<const double> z, Rng& rng) { return rng.exponential(sprinkler_mean(z)); };
    m.prior_logpdf = [prior](std::span<const double> z) { return gaussian_logpdf(prior, z); };
    m.prior_logpdf_tape = [prior](std::span<const Var> z) { return gaussian_logpdf<Var>(prior, z); };
    m.likelihood_logpdf = [](double x, std::span<const double> z) {
        return exponential_logpdf(ExponentialSpec(sprinkler_mean(z)), x);
    };
    m.likelihood_logpdf_tape = [](double x, std::span<const Var> z) {
        if (x < 0) throw ConfigError("sprinkler likelihood: x must be >= 0");
        return exponential_logpdf_of_mean(sprinkler_mean<Var>(z), x);
    };
    m.features = sprinkler_features;
    return m;
}

}  // namespace ivi
