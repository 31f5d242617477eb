#pragma once

// z ~ N(0, I), x | z ~ N(a . z, sigma_obs^2). Conjugate, so the exact posterior
// is available in closed form and serves as a reference for the VI methods.

#include <cmath>
#include <span>
#include <vector>

#include "ivi/models/distributions.hpp"
#include "ivi/models/latent_model.hpp"

namespace ivi {

// Posterior N(m, S) with S = I - a a^T / (sigma^2 + |a|^2) and m = a x / (sigma^2 + |a|^2)
// (Sherman-Morrison applied to the precision I + a a^T / sigma^2).
inline FullGaussian exact_posterior(std::span<const double> a, double sigma_obs, double x) {
    if (!(sigma_obs > 0)) throw ConfigError("exact_posterior: sigma_obs must be positive");
    const std::size_t d = a.size();
    double a2 = 0.0;
    for (double v : a) a2 += v * v;
    const double denom = sigma_obs * sigma_obs + a2;
    FullGaussian post;
    post.mean.resize(d);
    post.cov.assign(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        post.mean[i] = a[i] * x / denom;
        for (std::size_t j = 0; j < d; ++j) post.cov[i * d + j] = (i == j ? 1.0 : 0.0) - a[i] * a[j] / denom;
    }
    return post;
}

// log p(x) = log N(x; 0, sigma^2 + |a|^2)
inline double linear_gaussian_log_evidence(std::span<const double> a, double sigma_obs, double x) {
    double var = sigma_obs * sigma_obs;
    for (double v : a) var += v * v;
    return -0.5 * (kLog2Pi + std::log(var) + x * x / var);
}

inline LatentVariableModel linear_gaussian_model(std::vector<double> a, double sigma_obs) {
    if (!(sigma_obs > 0)) throw ConfigError("linear_gaussian_model: sigma_obs must be positive");
    if (a.empty()) throw ConfigError("linear_gaussian_model: a must be non-empty");
    const auto d = static_cast<std::uint32_t>(a.size());
    const GaussianSpec prior = GaussianSpec::isotropic(d, 0.0, 1.0);

    LatentVariableModel m;
    m.name = "linear_gaussian";
    m.latent_dim = d;
    m.sample_prior = [d](Rng& rng) {
        std::vector<double> z(d);
        for (auto& v : z) v = rng.normal();
        return z;
    };
    m.sample_likelihood = [a, sigma_obs](std::span<const double> z, Rng& rng) {
        double mean = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) mean += a[i] * z[i];
        return rng.normal(mean, sigma_obs);
    };
    m.prior_logpdf = [prior](std::span<const double> z) { return gaussian_logpdf(prior, z); };
    m.prior_logpdf_tape = [prior](std::span<const Var> z) { return gaussian_logpdf<Var>(prior, z); };
    m.likelihood_logpdf = [a, sigma_obs](double x, std::span<const double> z) {
        if (z.size() != a.size()) throw ConfigError("linear_gaussian likelihood: dimension mismatch");
        double mean = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) mean += a[i] * z[i];
        return -0.5 * (kLog2Pi + square((x - mean) / sigma_obs)) - std::log(sigma_obs);
    };
    m.likelihood_logpdf_tape = [a, sigma_obs](double x, std::span<const Var> z) {
        if (z.size() != a.size()) throw ConfigError("linear_gaussian likelihood: dimension mismatch");
        Var mean = z[0] * a[0];
        for (std::size_t i = 1; i < a.size(); ++i) mean = mean + z[i] * a[i];
        return square((x - mean) / sigma_obs) * -0.5 - (0.5 * kLog2Pi + std::log(sigma_obs));
    };
    m.features = [](double x) { return std::vector<double>{x}; };
    return m;
}

}  // namespace ivi
