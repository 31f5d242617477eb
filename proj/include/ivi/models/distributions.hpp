#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "ivi/error.hpp"
#include "ivi/numerics/math.hpp"
#include "ivi/numerics/tape.hpp"

namespace ivi {

// Diagonal Gaussian.
struct GaussianSpec {
    std::vector<double> mean;
    std::vector<double> std;

    GaussianSpec(std::vector<double> m, std::vector<double> s) : mean(std::move(m)), std(std::move(s)) {
        if (mean.size() != std.size()) throw ConfigError("GaussianSpec: mean/std dimension mismatch");
        for (double v : std)
            if (!(v > 0)) throw ConfigError("GaussianSpec: std must be positive");
    }

    static GaussianSpec isotropic(std::size_t dim, double mean, double std) {
        return {std::vector<double>(dim, mean), std::vector<double>(dim, std)};
    }

    std::size_t dim() const { return mean.size(); }
};

// Works for T = double and T = Var.
template <class T>
T gaussian_logpdf(const GaussianSpec& g, std::span<const T> z) {
    if (z.size() != g.dim() || z.empty()) throw ConfigError("gaussian_logpdf: dimension mismatch");
    double constant = 0.0;
    for (std::size_t i = 0; i < g.dim(); ++i) constant -= 0.5 * kLog2Pi + std::log(g.std[i]);
    T acc = square((z[0] - g.mean[0]) / g.std[0]) * -0.5;
    for (std::size_t i = 1; i < g.dim(); ++i) acc = acc + square((z[i] - g.mean[i]) / g.std[i]) * -0.5;
    return acc + constant;
}

inline double gaussian_logpdf(const GaussianSpec& g, std::span<const double> z) {
    return gaussian_logpdf<double>(g, z);
}

struct ExponentialSpec {
    double mean;

    explicit ExponentialSpec(double m) : mean(m) {
        if (!(m > 0)) throw ConfigError("ExponentialSpec: mean must be positive");
    }
};

// Exponential parameterized by its mean: density (1/mean) exp(-x/mean) on x >= 0.
inline double exponential_logpdf(const ExponentialSpec& e, double x) {
    if (x < 0) return -std::numeric_limits<double>::infinity();
    return -std::log(e.mean) - x / e.mean;
}

// Same density with the mean as a differentiable quantity. x must be >= 0.
template <class T>
T exponential_logpdf_of_mean(const T& mean, double x) {
    using std::log;
    return -log(mean) - x / mean;
}

// Gaussian with a dense covariance; used for closed-form posteriors.
struct FullGaussian {
    std::vector<double> mean;
    std::vector<double> cov;  // dim x dim, row-major

    std::size_t dim() const { return mean.size(); }

    double covariance(std::size_t i, std::size_t j) const { return cov[i * dim() + j]; }

    double logpdf(std::span<const double> z) const {
        const std::size_t d = dim();
        if (z.size() != d) throw ConfigError("FullGaussian::logpdf: dimension mismatch");
        // Cholesky factor L with cov = L L^T.
        std::vector<double> l(d * d, 0.0);
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = 0; j <= i; ++j) {
                double s = cov[i * d + j];
                for (std::size_t k = 0; k < j; ++k) s -= l[i * d + k] * l[j * d + k];
                if (i == j) {
                    if (!(s > 0)) throw NumericError("FullGaussian: covariance not positive definite");
                    l[i * d + i] = std::sqrt(s);
                } else {
                    l[i * d + j] = s / l[j * d + j];
                }
            }
        }
        // Solve L y = z - mean.
        std::vector<double> y(d);
        double log_det = 0.0, quad = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            double s = z[i] - mean[i];
            for (std::size_t k = 0; k < i; ++k) s -= l[i * d + k] * y[k];
            y[i] = s / l[i * d + i];
            quad += y[i] * y[i];
            log_det += 2.0 * std::log(l[i * d + i]);
        }
        return -0.5 * (static_cast<double>(d) * kLog2Pi + log_det + quad);
    }
};

}  // namespace ivi
