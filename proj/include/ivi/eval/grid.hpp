#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "ivi/error.hpp"
#include "ivi/models/latent_model.hpp"

namespace ivi {

// Bounded lattice over (z1, z2). Values sit at cell centres; cell (i, j) covers
// z1 in [z1_min + i h1, z1_min + (i+1) h1) and likewise for z2. Storage is
// row-major with z1 as the slow index.
struct GridSpec {
    double z1_min = -4.0, z1_max = 4.0;
    double z2_min = -4.0, z2_max = 4.0;
    std::uint32_t n1 = 200, n2 = 200;

    void validate() const {
        if (!(z1_max > z1_min) || !(z2_max > z2_min) || n1 == 0 || n2 == 0)
            throw ConfigError("GridSpec: need min < max and non-zero resolution");
    }
    double h1() const { return (z1_max - z1_min) / n1; }
    double h2() const { return (z2_max - z2_min) / n2; }
    double cell_area() const { return h1() * h2(); }
    double z1(std::size_t i) const { return z1_min + (static_cast<double>(i) + 0.5) * h1(); }
    double z2(std::size_t j) const { return z2_min + (static_cast<double>(j) + 0.5) * h2(); }
    std::size_t cells() const { return std::size_t{n1} * n2; }

    std::optional<std::size_t> locate(double a, double b) const {
        if (!(a >= z1_min && a < z1_max && b >= z2_min && b < z2_max)) return std::nullopt;
        const auto i = std::min<std::size_t>(n1 - 1, static_cast<std::size_t>((a - z1_min) / h1()));
        const auto j = std::min<std::size_t>(n2 - 1, static_cast<std::size_t>((b - z2_min) / h2()));
        return i * n2 + j;
    }

    // Cell centres, row-major cells() x 2.
    std::vector<double> centres() const {
        std::vector<double> out;
        out.reserve(cells() * 2);
        for (std::size_t i = 0; i < n1; ++i)
            for (std::size_t j = 0; j < n2; ++j) {
                out.push_back(z1(i));
                out.push_back(z2(j));
            }
        return out;
    }

    bool operator==(const GridSpec&) const = default;
};

// Recursive pairwise summation: the result depends only on the input order.
inline double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 16) {
        double acc = 0.0;
        for (double x : v) acc += x;
        return acc;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

struct Grid2D {
    GridSpec spec;
    std::vector<double> values;

    double mass() const { return pairwise_sum(values) * spec.cell_area(); }

    void normalize() {
        const double m = mass();
        if (!(m > 0) || !std::isfinite(m)) throw NumericError("Grid2D: cannot normalize zero or non-finite mass");
        for (auto& v : values) v /= m;
    }
};

// exp(log p(x, z)) over the lattice, normalized numerically.
inline Grid2D grid_posterior(const LatentVariableModel& model, double x, const GridSpec& spec) {
    spec.validate();
    if (model.latent_dim != 2) throw ConfigError("grid_posterior: latent dimension must be 2");
    if (!model.explicit_joint()) throw ConfigError("grid_posterior: model needs an explicit joint density");
    Grid2D g{spec, std::vector<double>(spec.cells())};
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < spec.n1; ++i)
        for (std::size_t j = 0; j < spec.n2; ++j) {
            const double z[2] = {spec.z1(i), spec.z2(j)};
            const double lp = model.joint_logpdf(x, z);
            g.values[i * spec.n2 + j] = lp;
            peak = std::max(peak, lp);
        }
    if (!std::isfinite(peak)) throw NumericError("grid_posterior: no posterior mass on the grid; widen the bounds");
    for (auto& v : g.values) v = std::exp(v - peak);
    g.normalize();
    return g;
}

struct HistogramResult {
    Grid2D grid;
    double out_of_bounds_fraction = 0.0;
};

// Normalized cell counts of latent pairs (row-major n x 2).
inline HistogramResult histogram_density(std::span<const double> samples, const GridSpec& spec) {
    spec.validate();
    if (samples.size() % 2 != 0) throw ConfigError("histogram_density: samples must be pairs");
    HistogramResult h{{spec, std::vector<double>(spec.cells(), 0.0)}, 0.0};
    const std::size_t n = samples.size() / 2;
    std::size_t inside = 0;
    for (std::size_t k = 0; k < n; ++k) {
        if (auto idx = spec.locate(samples[2 * k], samples[2 * k + 1])) {
            h.grid.values[*idx] += 1.0;
            ++inside;
        }
    }
    if (inside == 0) throw NumericError("histogram_density: no samples inside the grid");
    const double scale = 1.0 / (static_cast<double>(inside) * spec.cell_area());
    for (auto& v : h.grid.values) v *= scale;
    h.out_of_bounds_fraction = static_cast<double>(n - inside) / static_cast<double>(n);
    return h;
}

// KL(q || p) = sum q ln((q + eps) / (p + eps)) * cell_area, in nats.
inline double kl_grid(const Grid2D& q, const Grid2D& p, double eps_smooth = 1e-10) {
    if (!(q.spec == p.spec) || q.values.size() != p.values.size()) throw ConfigError("kl_grid: grid mismatch");
    std::vector<double> terms(q.values.size(), 0.0);
    for (std::size_t i = 0; i < terms.size(); ++i)
        if (q.values[i] > 0) terms[i] = q.values[i] * std::log((q.values[i] + eps_smooth) / (p.values[i] + eps_smooth));
    return pairwise_sum(terms) * q.spec.cell_area();
}

// Pearson correlation of (z1, z2) under a normalized grid density.
inline double grid_correlation(const Grid2D& g) {
    const auto& s = g.spec;
    double w = 0, m1 = 0, m2 = 0;
    for (std::size_t i = 0; i < s.n1; ++i)
        for (std::size_t j = 0; j < s.n2; ++j) {
            const double p = g.values[i * s.n2 + j];
            w += p;
            m1 += p * s.z1(i);
            m2 += p * s.z2(j);
        }
    m1 /= w;
    m2 /= w;
    double c11 = 0, c22 = 0, c12 = 0;
    for (std::size_t i = 0; i < s.n1; ++i)
        for (std::size_t j = 0; j < s.n2; ++j) {
            const double p = g.values[i * s.n2 + j];
            const double d1 = s.z1(i) - m1, d2 = s.z2(j) - m2;
            c11 += p * d1 * d1;
            c22 += p * d2 * d2;
            c12 += p * d1 * d2;
        }
    return c12 / std::sqrt(c11 * c22);
}

// Total variation distance 0.5 * sum |a - b| * cell_area.
inline double total_variation(const Grid2D& a, const Grid2D& b) {
    if (!(a.spec == b.spec)) throw ConfigError("total_variation: grid mismatch");
    std::vector<double> d(a.values.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = std::abs(a.values[i] - b.values[i]);
    return 0.5 * pairwise_sum(d) * a.spec.cell_area();
}

// A density evaluated at the cell centres and normalized on the grid.
template <class F>
Grid2D grid_from_logpdf(const GridSpec& spec, F&& logpdf) {
    spec.validate();
    Grid2D g{spec, std::vector<double>(spec.cells())};
    for (std::size_t i = 0; i < spec.n1; ++i)
        for (std::size_t j = 0; j < spec.n2; ++j) {
            const double z[2] = {spec.z1(i), spec.z2(j)};
            g.values[i * spec.n2 + j] = std::exp(logpdf(std::span<const double>(z, 2)));
        }
    g.normalize();
    return g;
}

}  // namespace ivi
