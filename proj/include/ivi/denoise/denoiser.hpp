#pragma once

// Denoising autoencoders as score estimators. For Gaussian corruption of width
// sigma, the Bayes-optimal denoiser satisfies u(z) ~ z + sigma^2 d/dz log q(z | x),
// so (u(z) - z) / sigma^2 estimates the score of the distribution it was fit to.
//
// DenoiserNet uses the residual form u(z, x) = z + sigma^2 * net(z, x): the same
// function family as a plain denoiser, but the network output is the score
// itself and stays O(1) however small sigma gets.

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "ivi/models/latent_model.hpp"
#include "ivi/numerics/adam.hpp"
#include "ivi/numerics/mlp.hpp"
#include "ivi/ratio/ratio_net.hpp"

namespace ivi {

struct NoiseConfig {
    double sigma = 0.1;
    double decay = 1.0;  // geometric factor per outer step
    double sigma_min = 1e-3;

    double at(std::size_t outer_step) const {
        if (!(sigma > 0) || !(sigma_min > 0) || sigma < sigma_min || !(decay > 0 && decay <= 1))
            throw ConfigError("NoiseConfig: need sigma >= sigma_min > 0 and decay in (0, 1]");
        return std::max(sigma_min, sigma * std::pow(decay, static_cast<double>(outer_step)));
    }
};

struct DenoiserNet {
    MlpParams net;
    std::uint32_t latent_dim = 0;
    bool conditioned_on_x = true;
    std::function<std::vector<double>(double)> features;

    static DenoiserNet make(const LatentVariableModel& model, std::span<const std::uint32_t> hidden, Activation act,
                            Rng& rng, bool conditioned_on_x = true) {
        DenoiserNet u;
        u.latent_dim = model.latent_dim;
        u.conditioned_on_x = conditioned_on_x;
        u.features = model.features;
        const std::uint32_t in = model.latent_dim + (conditioned_on_x ? model.feature_dim() : 0);
        u.net = MlpParams::make(in, hidden, act, model.latent_dim);
        u.net.init_glorot(rng);
        return u;
    }

    // The identity denoiser: zero output weights, so u(z) = z and the score is 0.
    static DenoiserNet identity_like(DenoiserNet u) {
        const auto last = u.net.layers().size() - 1;
        for (auto& w : u.net.weight(last)) w = 0.0;
        for (auto& b : u.net.bias(last)) b = 0.0;
        return u;
    }

    std::vector<double> inputs(std::span<const double> xs, std::span<const double> zs) const {
        if (zs.size() != xs.size() * latent_dim) throw ConfigError("DenoiserNet: batch length mismatch");
        std::vector<double> in;
        in.reserve(xs.size() * net.input_dim());
        for (std::size_t b = 0; b < xs.size(); ++b) {
            in.insert(in.end(), zs.begin() + b * latent_dim, zs.begin() + (b + 1) * latent_dim);
            if (conditioned_on_x) {
                const auto f = features(xs[b]);
                in.insert(in.end(), f.begin(), f.end());
            }
        }
        if (in.size() != xs.size() * net.input_dim()) throw ConfigError("DenoiserNet: feature size mismatch");
        return in;
    }

    // Score estimates (u(z) - z) / sigma^2 for a batch, row-major B x latent_dim.
    std::vector<double> scores(std::span<const double> xs, std::span<const double> zs) const {
        return mlp_forward_batch(net, inputs(xs, zs), xs.size());
    }

    std::vector<double> denoise(double x, std::span<const double> z, double sigma) const {
        auto out = scores({&x, 1}, z);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = z[i] + sigma * sigma * out[i];
        return out;
    }
};

// Mean over the batch of |u(z + eta, x) - z|^2 with fresh eta ~ N(0, sigma^2 I).
inline Var denoiser_loss(const BoundMlp& u_net, const DenoiserNet& u, Tape& tape, std::span<const double> zs,
                         std::span<const double> xs, Rng& rng, double sigma) {
    if (!(sigma > 0)) throw ConfigError("denoiser_loss: sigma must be positive");
    if (xs.empty()) throw ConfigError("denoiser_loss: empty batch");
    std::vector<double> eta(zs.size()), noisy(zs.size());
    for (std::size_t i = 0; i < zs.size(); ++i) {
        eta[i] = sigma * rng.normal();
        noisy[i] = zs[i] + eta[i];
    }
    const auto in = u.inputs(xs, noisy);
    const Block s = u_net.apply(tape.leaves(in, static_cast<std::uint32_t>(xs.size()), u.net.input_dim()));
    const double s2 = sigma * sigma;
    std::vector<Var> terms(zs.size());
    for (std::size_t i = 0; i < zs.size(); ++i) terms[i] = square(s[i] * s2 + eta[i]);
    const Var total = tape.sum(tape.gather(terms, static_cast<std::uint32_t>(terms.size()), 1));
    return total / static_cast<double>(xs.size());
}

inline Var denoiser_loss(const DenoiserNet& u, Tape& tape, std::span<const double> zs, std::span<const double> xs,
                         Rng& rng, double sigma) {
    BoundMlp net(tape, u.net, ParamMode::trainable);
    return denoiser_loss(net, u, tape, zs, xs, rng, sigma);
}

struct DenoiseTrainConfig {
    std::size_t inner_steps = 5;
    std::size_t batch = 128;
    double learning_rate = 1e-3;
};

using DenoiseSampler = std::function<SampleBatch(Rng&, std::size_t batch)>;

struct DenoiseReport {
    std::size_t steps = 0;
    double last_loss = std::nan("");
};

inline DenoiseReport fit_denoiser(DenoiserNet& u, AdamState& opt, const DenoiseSampler& sampler,
                                  const DenoiseTrainConfig& cfg, double sigma, Rng& rng) {
    if (cfg.batch == 0) throw ConfigError("fit_denoiser: batch must be >= 1");
    if (opt.first_moment.size() != u.net.size()) opt = AdamState(u.net.size(), opt.config);
    opt.config.learning_rate = cfg.learning_rate;
    DenoiseReport report;
    for (std::size_t k = 0; k < cfg.inner_steps; ++k) {
        const SampleBatch batch = sampler(rng, cfg.batch);
        Tape tape;
        BoundMlp net(tape, u.net, ParamMode::trainable);
        const Var loss = denoiser_loss(net, u, tape, batch.zs, batch.xs, rng, sigma);
        if (!std::isfinite(loss.value()))
            throw NumericError("fit_denoiser: non-finite denoiser loss", static_cast<std::ptrdiff_t>(k));
        tape.backward(loss);
        adam_step(opt, u.net.values(), net.gradient(), "phi");
        report.steps = k + 1;
        report.last_loss = loss.value();
    }
    return report;
}

// (u(z) - z) / sigma^2 for an arbitrary denoising function.
inline std::vector<double> score_from_denoiser(const std::function<std::vector<double>(std::span<const double>)>& u,
                                               std::span<const double> z, double sigma) {
    if (!(sigma > 0)) throw ConfigError("score_from_denoiser: sigma must be positive");
    auto out = u(z);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (out[i] - z[i]) / (sigma * sigma);
    return out;
}

// Residual-form networks carry the score directly.
inline std::vector<double> score_from_denoiser(const DenoiserNet& u, std::span<const double> z, double x) {
    return u.scores({&x, 1}, z);
}

// score_p(z | x) - score_q(z | x): the z-gradient kernel of the joint-contrastive
// objective, from one denoiser fit to p(x, z) and one fit to p_D(x) q(z | x).
inline std::vector<double> joint_scores_from_denoisers(const DenoiserNet& u_q, const DenoiserNet& u_p, double x,
                                                       std::span<const double> z) {
    const auto sq = score_from_denoiser(u_q, z, x);
    auto sp = score_from_denoiser(u_p, z, x);
    for (std::size_t i = 0; i < sp.size(); ++i) sp[i] -= sq[i];
    return sp;
}

}  // namespace ivi
