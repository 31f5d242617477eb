#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "ivi/eval/grid.hpp"
#include "ivi/infer/run_state.hpp"
#include "ivi/models/implicit_posterior.hpp"
#include "ivi/ratio/ratio_net.hpp"

namespace ivi {

// Batched ratio: (xs, zs row-major) -> one value per row.
using BatchRatioFn = std::function<std::vector<double>(std::span<const double>, std::span<const double>)>;

inline BatchRatioFn as_batch_fn(const RatioNet& r) {
    return [&r](std::span<const double> xs, std::span<const double> zs) { return r.evaluate(xs, zs); };
}

// Posterior-weighted standard deviation of r(x, z) - log p(x | z) over the grid.
// Zero exactly when the ratio equals the log-likelihood up to an additive constant.
inline double ratio_limit_diagnostic(const BatchRatioFn& r, const LatentVariableModel& model, double x,
                                     const Grid2D& posterior) {
    if (!model.explicit_likelihood()) throw ConfigError("ratio_limit_diagnostic: needs an explicit likelihood");
    const auto zs = posterior.spec.centres();
    const std::vector<double> xs(posterior.spec.cells(), x);
    const auto rs = r(xs, zs);
    std::vector<double> w(rs.size()), wd(rs.size());
    std::vector<double> diff(rs.size());
    for (std::size_t c = 0; c < rs.size(); ++c) {
        const double p = posterior.values[c];
        diff[c] = p > 0 ? rs[c] - model.likelihood_logpdf(x, std::span<const double>(zs).subspan(2 * c, 2)) : 0.0;
        w[c] = p;
        wd[c] = p * diff[c];
    }
    const double total = pairwise_sum(w);
    const double mean = pairwise_sum(wd) / total;
    for (std::size_t c = 0; c < rs.size(); ++c) wd[c] = w[c] * square(diff[c] - mean);
    return std::sqrt(std::max(0.0, pairwise_sum(wd) / total));
}

inline double ratio_limit_diagnostic(const RatioNet& r, const LatentVariableModel& model, double x,
                                     const Grid2D& posterior) {
    return ratio_limit_diagnostic(as_batch_fn(r), model, x, posterior);
}

// Mean |s(x, z)| over held-out pairs.
inline double flatness_diagnostic(const BatchRatioFn& s, const SampleBatch& samples) {
    if (samples.size() == 0) throw ConfigError("flatness_diagnostic: empty sample set");
    const auto vals = s(samples.xs, samples.zs);
    std::vector<double> a(vals.size());
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = std::abs(vals[i]);
    return pairwise_sum(a) / static_cast<double>(a.size());
}

inline double flatness_diagnostic(const RatioNet& s, const SampleBatch& samples) {
    return flatness_diagnostic(as_batch_fn(s), samples);
}

using VectorField2D = std::function<std::array<double, 2>(double, double)>;

// Mean |d s1/d z2 - d s2/d z1| over the cell centres, by central differences of
// width h. Zero for gradient (conservative) fields.
inline double curl_proxy(const VectorField2D& field, const GridSpec& spec, double h = 1e-4) {
    spec.validate();
    std::vector<double> curl(spec.cells());
    for (std::size_t i = 0; i < spec.n1; ++i)
        for (std::size_t j = 0; j < spec.n2; ++j) {
            const double a = spec.z1(i), b = spec.z2(j);
            const double ds1_dz2 = (field(a, b + h)[0] - field(a, b - h)[0]) / (2 * h);
            const double ds2_dz1 = (field(a + h, b)[1] - field(a - h, b)[1]) / (2 * h);
            curl[i * spec.n2 + j] = std::abs(ds1_dz2 - ds2_dz1);
        }
    return pairwise_sum(curl) / static_cast<double>(curl.size());
}

struct Diagnostics {
    double x = 0.0;
    double kl_nats = 0.0;
    std::optional<double> ratio_limit_std;
    std::optional<double> flatness_mean_abs;
    double posterior_correlation = 0.0;  // under the grid posterior
    double approx_correlation = 0.0;     // under the histogram of q samples
    std::optional<double> curl_proxy;
    double out_of_bounds_fraction = 0.0;
};

struct EvalOptions {
    GridSpec grid;
    std::size_t samples = 1000000;
    std::size_t flatness_samples = 10000;
    double kl_eps = 1e-10;
    // Coarser lattice for the curl proxy (each cell costs four network calls).
    GridSpec curl_grid{-4, 4, -4, 4, 40, 40};
};

struct EvalResult {
    Diagnostics diagnostics;
    Grid2D approx;
    Grid2D truth;
};

// Held-out pairs from the model joint, for the flatness check.
inline SampleBatch joint_samples(const LatentVariableModel& model, std::size_t n, Rng& rng) {
    SampleBatch s;
    for (std::size_t k = 0; k < n; ++k) {
        const auto z = model.sample_prior(rng);
        s.xs.push_back(model.sample_likelihood(z, rng));
        s.zs.insert(s.zs.end(), z.begin(), z.end());
    }
    return s;
}

// Every diagnostic that applies to the trained state at observation x.
inline EvalResult evaluate_at(const RunState& s, Method method, const LatentVariableModel& model, double x,
                              const EvalOptions& opt, Rng& rng) {
    EvalResult res{{}, {}, grid_posterior(model, x, opt.grid)};
    auto hist = histogram_density(posterior_sample(s.q, x, rng, opt.samples), opt.grid);
    res.approx = std::move(hist.grid);
    auto& d = res.diagnostics;
    d.x = x;
    d.out_of_bounds_fraction = hist.out_of_bounds_fraction;
    d.kl_nats = kl_grid(res.approx, res.truth, opt.kl_eps);
    d.posterior_correlation = grid_correlation(res.truth);
    d.approx_correlation = grid_correlation(res.approx);
    if (s.ratio && method != Method::jc_adv && model.explicit_likelihood())
        d.ratio_limit_std = ratio_limit_diagnostic(*s.ratio, model, x, res.truth);
    if (s.ratio && method == Method::jc_adv)
        d.flatness_mean_abs = flatness_diagnostic(*s.ratio, joint_samples(model, opt.flatness_samples, rng));
    if (s.denoiser_q) {
        const DenoiserNet& u = *s.denoiser_q;
        d.curl_proxy = curl_proxy(
            [&u, x](double a, double b) {
                const double z[2] = {a, b};
                const auto sc = u.scores({&x, 1}, z);
                return std::array<double, 2>{sc[0], sc[1]};
            },
            opt.curl_grid);
    }
    return res;
}

}  // namespace ivi
