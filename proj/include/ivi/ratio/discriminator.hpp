#pragma once

// Logistic-regression density-ratio estimation. Minimising
//     sum_b softplus(r(p_b)) - softminus(r(q_b))
// over r drives r towards log q / p, where the q-side samples are the
// numerator. The prior-contrastive and joint-contrastive estimators differ only
// in where the two sample streams come from.

#include <cmath>
#include <functional>
#include <string>

#include "ivi/numerics/adam.hpp"
#include "ivi/ratio/ratio_net.hpp"

namespace ivi {

struct DiscTrainConfig {
    std::size_t inner_steps = 5;
    std::size_t batch = 128;
    double learning_rate = 1e-3;
};

// One minibatch for the discriminator: numerator (q) and denominator (p) streams.
struct DiscBatch {
    SampleBatch q_side;
    SampleBatch p_side;
};

using DiscSampler = std::function<DiscBatch(Rng&, std::size_t batch)>;

inline Var logistic_ratio_loss(const BoundRatio& r, Tape& tape, const SampleBatch& p_side, const SampleBatch& q_side) {
    if (p_side.size() != q_side.size() || p_side.size() == 0)
        throw ConfigError("discriminator loss: both sample streams need the same non-zero length");
    const auto rp = r.apply(p_side.xs, p_side.zs);
    const auto rq = r.apply(q_side.xs, q_side.zs);
    std::vector<Var> terms(rp.size());
    for (std::size_t b = 0; b < rp.size(); ++b) terms[b] = softplus(rp[b]) - softminus(rq[b]);
    return tape.sum(tape.gather(terms, static_cast<std::uint32_t>(terms.size()), 1));
}

// Prior-contrastive: every observation x_b is paired with a prior draw and a
// posterior draw, so r estimates log q(z | x) / p(z) for each x.
inline Var pc_disc_loss(const BoundRatio& r, Tape& tape, std::span<const double> xs, std::span<const double> z_prior,
                        std::span<const double> z_q) {
    if (z_prior.size() != z_q.size()) throw ConfigError("pc_disc_loss: batch length mismatch");
    SampleBatch p{{xs.begin(), xs.end()}, {z_prior.begin(), z_prior.end()}};
    SampleBatch q{{xs.begin(), xs.end()}, {z_q.begin(), z_q.end()}};
    return logistic_ratio_loss(r, tape, p, q);
}

// Joint-contrastive: q_side ~ p_D(x) q(z | x), p_side ~ p(x, z).
inline Var jc_disc_loss(const BoundRatio& s, Tape& tape, const SampleBatch& q_side, const SampleBatch& p_side) {
    return logistic_ratio_loss(s, tape, p_side, q_side);
}

struct FitReport {
    std::size_t steps = 0;
    double last_loss = std::nan("");
};

// Exactly cfg.inner_steps Adam steps on the logistic loss, each on a fresh batch.
inline FitReport fit_ratio(RatioNet& r, AdamState& opt, const DiscSampler& sampler, const DiscTrainConfig& cfg,
                           Rng& rng) {
    if (cfg.batch == 0) throw ConfigError("fit_ratio: batch must be >= 1");
    if (opt.first_moment.size() != r.net.size()) opt = AdamState(r.net.size(), opt.config);
    opt.config.learning_rate = cfg.learning_rate;
    FitReport report;
    for (std::size_t k = 0; k < cfg.inner_steps; ++k) {
        const DiscBatch batch = sampler(rng, cfg.batch);
        Tape tape;
        BoundRatio bound(tape, r, ParamMode::trainable);
        const Var loss = logistic_ratio_loss(bound, tape, batch.p_side, batch.q_side);
        if (!std::isfinite(loss.value()))
            throw NumericError("fit_ratio: non-finite discriminator loss", static_cast<std::ptrdiff_t>(k));
        tape.backward(loss);
        adam_step(opt, r.net.values(), bound.net().gradient(), "phi");
        report.steps = k + 1;
        report.last_loss = loss.value();
    }
    return report;
}

}  // namespace ivi
