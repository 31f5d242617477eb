#pragma once

// Outer loops of the implicit-VI algorithms. Each outer step fits the auxiliary
// network(s) for a few inner steps with the generator held fixed, then takes one
// Adam step on the generator. The auxiliary networks are always frozen during the
// generator step: the ratio (or score) is treated as a constant function of z,
// which yields the correct KL gradient at the current generator parameters.

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "ivi/infer/run_state.hpp"

namespace ivi {

namespace detail {

inline std::vector<Var> row(const Block& b, std::size_t r) {
    std::vector<Var> out(b.cols);
    for (std::uint32_t c = 0; c < b.cols; ++c) out[c] = b.at(r, c);
    return out;
}

inline double l2_distance(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += square(a[i] - b[i]);
    return std::sqrt(acc);
}

inline void reinit_if_cold(RatioNet& r, AdamState& opt, const TrainLoopConfig& cfg, Rng& rng) {
    if (cfg.warm_start_inner) return;
    r.net.init_glorot(rng);
    opt.reset();
}

inline void reinit_if_cold(DenoiserNet& u, AdamState& opt, const TrainLoopConfig& cfg, Rng& rng) {
    if (cfg.warm_start_inner) return;
    u.net.init_glorot(rng);
    opt.reset();
}

inline std::vector<double> prior_batch(const LatentVariableModel& model, Rng& rng, std::size_t n) {
    std::vector<double> zs;
    zs.reserve(n * model.latent_dim);
    for (std::size_t b = 0; b < n; ++b) {
        const auto z = model.sample_prior(rng);
        zs.insert(zs.end(), z.begin(), z.end());
    }
    return zs;
}

inline SampleBatch joint_batch(const LatentVariableModel& model, Rng& rng, std::size_t n) {
    SampleBatch s;
    s.xs.reserve(n);
    s.zs.reserve(n * model.latent_dim);
    for (std::size_t b = 0; b < n; ++b) {
        const auto z = model.sample_prior(rng);
        s.xs.push_back(model.sample_likelihood(z, rng));
        s.zs.insert(s.zs.end(), z.begin(), z.end());
    }
    return s;
}

inline SampleBatch posterior_batch(const ImplicitPosterior& q, const Dataset& data, Rng& rng, std::size_t n) {
    SampleBatch s;
    s.xs = data.sample(rng, n);
    s.zs = q.sample(s.xs, rng);
    return s;
}

}  // namespace detail

// Stream pairing for the prior-contrastive discriminator: the same observations
// are matched with prior draws (denominator) and posterior draws (numerator).
inline DiscSampler pc_disc_sampler(const ImplicitPosterior& q, const LatentVariableModel& model, const Dataset& data) {
    return [&q, &model, &data](Rng& rng, std::size_t n) {
        DiscBatch b;
        b.p_side.xs = data.sample(rng, n);
        b.p_side.zs = detail::prior_batch(model, rng, n);
        b.q_side.xs = b.p_side.xs;
        b.q_side.zs = q.sample(b.q_side.xs, rng);
        return b;
    };
}

// Joint-contrastive: p_D(x) q(z | x) against p(x, z); needs only samplers.
inline DiscSampler jc_disc_sampler(const ImplicitPosterior& q, const LatentVariableModel& model, const Dataset& data) {
    return [&q, &model, &data](Rng& rng, std::size_t n) {
        DiscBatch b;
        b.q_side = detail::posterior_batch(q, data, rng, n);
        b.p_side = detail::joint_batch(model, rng, n);
        return b;
    };
}

struct PsiGradient {
    GradientEstimate gradient;
    double objective = std::nan("");  // per-observation mean; NaN when only a gradient exists
};

// d/dpsi of sum_b r(x_b, g(x_b, eps_b)) - log p(x_b | g(x_b, eps_b)) with r frozen.
inline PsiGradient pc_adv_gradient(const ImplicitPosterior& q, const RatioNet& r, const LatentVariableModel& model,
                                   std::span<const double> xs, std::span<const double> eps) {
    if (!model.explicit_likelihood())
        throw ConfigError("pc_adv requires an explicit likelihood p(x | z); use jc_adv for implicit likelihoods");
    Tape tape;
    BoundMlp g(tape, q.generator, ParamMode::trainable);
    const Block z = q.sample_on_tape(g, tape, xs, eps);
    const BoundRatio frozen = freeze_ratio_for_psi_step(tape, r);
    const auto rs = frozen.apply(xs, z);
    std::vector<Var> terms(xs.size());
    for (std::size_t b = 0; b < xs.size(); ++b) {
        const auto zrow = detail::row(z, b);
        terms[b] = rs[b] - model.likelihood_logpdf_tape(xs[b], zrow);
    }
    const Var loss = tape.sum(tape.gather(terms, static_cast<std::uint32_t>(terms.size()), 1));
    tape.backward(loss);
    return {{g.gradient(), Provenance::adversarial}, loss.value() / static_cast<double>(xs.size())};
}

// d/dpsi of sum_b s(x_b, g(x_b, eps_b)) with s frozen.
inline PsiGradient jc_adv_gradient(const ImplicitPosterior& q, const RatioNet& s, std::span<const double> xs,
                                   std::span<const double> eps) {
    Tape tape;
    BoundMlp g(tape, q.generator, ParamMode::trainable);
    const Block z = q.sample_on_tape(g, tape, xs, eps);
    const auto ss = freeze_ratio_for_psi_step(tape, s).apply(xs, z);
    const Var loss = tape.sum(tape.gather(ss, static_cast<std::uint32_t>(ss.size()), 1));
    tape.backward(loss);
    return {{g.gradient(), Provenance::adversarial}, loss.value() / static_cast<double>(xs.size())};
}

// Given per-sample z-kernels k_b (an estimate of d/dz [log p(x_b, z) - log q(z | x_b)]
// at z_b = g(x_b, eps_b)), returns -sum_b (dg/dpsi)^T k_b: the negative-ELBO gradient.
inline GradientEstimate gradient_from_score_kernel(const ImplicitPosterior& q, std::span<const double> xs,
                                                   std::span<const double> eps, std::span<const double> kernel) {
    if (kernel.size() != xs.size() * q.latent_dim) throw ConfigError("score kernel shape mismatch");
    Tape tape;
    BoundMlp g(tape, q.generator, ParamMode::trainable);
    const Block z = q.sample_on_tape(g, tape, xs, eps);
    std::vector<Var> terms(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) terms[i] = z[i] * -kernel[i];
    tape.backward(tape.sum(tape.gather(terms, static_cast<std::uint32_t>(terms.size()), 1)));
    return {g.gradient(), Provenance::denoising};
}

// score_p - score_q at z_b = g(x_b, eps_b) for the prior-contrastive denoising estimator.
// The model's joint score is used when it is explicit; with an implicit prior the
// prior part comes from a denoiser fit to prior samples.
inline std::vector<double> pc_den_kernel(const RunState& s, const LatentVariableModel& model,
                                         std::span<const double> xs, std::span<const double> zs) {
    const std::size_t d = model.latent_dim;
    std::vector<double> kernel(zs.size());
    const bool analytic = model.explicit_joint();
    if (!analytic && !(model.explicit_likelihood() && s.denoiser_p))
        throw ConfigError("pc_den needs d/dz log p(x, z): an explicit joint, or an explicit likelihood plus a prior "
                          "denoiser");
    const auto score_q = s.denoiser_q->scores(xs, zs);
    std::vector<double> prior_scores;
    if (!analytic) prior_scores = s.denoiser_p->scores(xs, zs);
    for (std::size_t b = 0; b < xs.size(); ++b) {
        const auto z = zs.subspan(b * d, d);
        const auto sp = analytic ? model.joint_score(xs[b], z) : model.likelihood_score(xs[b], z);
        for (std::size_t i = 0; i < d; ++i) {
            double v = sp[i] - score_q[b * d + i];
            if (!analytic) v += prior_scores[b * d + i];
            kernel[b * d + i] = v;
        }
    }
    return kernel;
}

inline GradientEstimate hybrid_gradient(const GradientEstimate& adv, const GradientEstimate& den, double alpha) {
    if (adv.values.size() != den.values.size()) throw ConfigError("hybrid_gradient: shape mismatch");
    if (alpha < 0 || alpha > 1) throw ConfigError("hybrid_gradient: alpha must lie in [0, 1]");
    GradientEstimate out{std::vector<double>(adv.values.size()), Provenance::hybrid};
    for (std::size_t i = 0; i < out.values.size(); ++i)
        out.values[i] = alpha * adv.values[i] + (1.0 - alpha) * den.values[i];
    return out;
}

// Monte-Carlo ELBO per observation: mean_b log p(x_b | z_b) - r(x_b, z_b), z_b ~ q(. | x_b).
inline double elbo_monitor(std::span<const double> xs, const std::function<std::vector<double>(double, Rng&)>& sample_q,
                           const std::function<double(double, std::span<const double>)>& ratio,
                           const std::function<double(double, std::span<const double>)>& loglik, Rng& rng) {
    if (xs.empty()) throw ConfigError("elbo_monitor: empty batch");
    double acc = 0.0;
    for (double x : xs) {
        const auto z = sample_q(x, rng);
        acc += loglik(x, z) - ratio(x, z);
    }
    return acc / static_cast<double>(xs.size());
}

inline double elbo_monitor(const RunState& s, const LatentVariableModel& model, std::span<const double> xs, Rng& rng) {
    if (!s.ratio || !model.explicit_likelihood())
        throw ConfigError("elbo_monitor needs a prior-contrastive ratio and an explicit likelihood");
    const auto zs = s.q.sample(xs, rng);
    const auto rs = s.ratio->evaluate(xs, zs);
    double acc = 0.0;
    for (std::size_t b = 0; b < xs.size(); ++b)
        acc += model.likelihood_logpdf(xs[b], std::span<const double>(zs).subspan(b * model.latent_dim,
                                                                                   model.latent_dim)) - rs[b];
    return acc / static_cast<double>(xs.size());
}

namespace detail {

inline double fit_ratio_inner(RunState& s, const DiscSampler& sampler, const TrainLoopConfig& cfg, Rng& rng) {
    reinit_if_cold(*s.ratio, s.ratio_opt, cfg, rng);
    return fit_ratio(*s.ratio, s.ratio_opt, sampler, {cfg.inner_steps, cfg.batch, cfg.phi_learning_rate}, rng)
        .last_loss;
}

inline double fit_denoiser_q_inner(RunState& s, const Dataset& data, const TrainLoopConfig& cfg, double sigma,
                                   Rng& rng) {
    reinit_if_cold(*s.denoiser_q, s.denoiser_q_opt, cfg, rng);
    const ImplicitPosterior& q = s.q;
    const DenoiseSampler sampler = [&q, &data](Rng& r, std::size_t n) { return posterior_batch(q, data, r, n); };
    return fit_denoiser(*s.denoiser_q, s.denoiser_q_opt, sampler, {cfg.inner_steps, cfg.batch, cfg.phi_learning_rate},
                        sigma, rng)
        .last_loss;
}

inline void fit_denoiser_p_inner(RunState& s, const LatentVariableModel& model, const TrainLoopConfig& cfg,
                                 double sigma, Rng& rng) {
    if (!s.denoiser_p) return;
    reinit_if_cold(*s.denoiser_p, s.denoiser_p_opt, cfg, rng);
    const DenoiseSampler sampler = [&model](Rng& r, std::size_t n) { return joint_batch(model, r, n); };
    fit_denoiser(*s.denoiser_p, s.denoiser_p_opt, sampler, {cfg.inner_steps, cfg.batch, cfg.phi_learning_rate}, sigma,
                 rng);
}

inline StepMetrics apply_psi(RunState& s, const GradientEstimate& g, double inner_loss, double objective) {
    const std::vector<double> before(s.q.generator.values().begin(), s.q.generator.values().end());
    adam_step(s.psi_opt, s.q.generator.values(), g.values, "psi");
    StepMetrics m;
    m.step = s.step;
    m.inner_loss = inner_loss;
    m.psi_objective = objective;
    m.psi_displacement_norm = l2_distance(before, s.q.generator.values());
    ++s.step;
    return m;
}

}  // namespace detail

inline StepMetrics pc_adv_outer_step(RunState& s, const LatentVariableModel& model, const Dataset& data,
                                     const TrainLoopConfig& cfg, Rng& rng) {
    if (!model.explicit_likelihood())
        throw ConfigError("pc_adv requires an explicit likelihood p(x | z); use jc_adv for implicit likelihoods");
    if (!s.ratio) throw ConfigError("pc_adv: run state has no ratio estimator");
    const double inner = detail::fit_ratio_inner(s, pc_disc_sampler(s.q, model, data), cfg, rng) /
                         static_cast<double>(cfg.batch);
    const auto xs = data.sample(rng, cfg.batch);
    const auto eps = s.q.draw_noise(rng, cfg.batch);
    const auto pg = pc_adv_gradient(s.q, *s.ratio, model, xs, eps);
    auto m = detail::apply_psi(s, pg.gradient, inner, pg.objective);
    m.elbo_estimate = -pg.objective;
    return m;
}

inline StepMetrics jc_adv_outer_step(RunState& s, const LatentVariableModel& model, const Dataset& data,
                                     const TrainLoopConfig& cfg, Rng& rng) {
    if (!s.ratio) throw ConfigError("jc_adv: run state has no ratio estimator");
    const double inner = detail::fit_ratio_inner(s, jc_disc_sampler(s.q, model, data), cfg, rng) /
                         static_cast<double>(cfg.batch);
    const auto xs = data.sample(rng, cfg.batch);
    const auto eps = s.q.draw_noise(rng, cfg.batch);
    const auto pg = jc_adv_gradient(s.q, *s.ratio, xs, eps);
    return detail::apply_psi(s, pg.gradient, inner, pg.objective);
}

inline StepMetrics pc_den_outer_step(RunState& s, const LatentVariableModel& model, const Dataset& data,
                                     const TrainLoopConfig& cfg, Rng& rng) {
    if (!s.denoiser_q) throw ConfigError("pc_den: run state has no denoiser");
    const double sigma = cfg.noise.at(s.step);
    const double inner = detail::fit_denoiser_q_inner(s, data, cfg, sigma, rng);
    if (!model.explicit_prior()) {
        if (!s.denoiser_p) throw ConfigError("pc_den: implicit prior requires a prior denoiser");
        detail::fit_denoiser_p_inner(s, model, cfg, sigma, rng);
    }
    const auto xs = data.sample(rng, cfg.batch);
    const auto eps = s.q.draw_noise(rng, cfg.batch);
    const auto zs = mlp_forward_batch(s.q.generator, s.q.inputs(xs, eps), xs.size());
    const auto g = gradient_from_score_kernel(s.q, xs, eps, pc_den_kernel(s, model, xs, zs));
    return detail::apply_psi(s, g, inner, std::nan(""));
}

inline StepMetrics jc_den_outer_step(RunState& s, const LatentVariableModel& model, const Dataset& data,
                                     const TrainLoopConfig& cfg, Rng& rng) {
    if (!s.denoiser_q || !s.denoiser_p) throw ConfigError("jc_den: run state needs both denoisers");
    const double sigma = cfg.noise.at(s.step);
    const double inner = detail::fit_denoiser_q_inner(s, data, cfg, sigma, rng);
    detail::fit_denoiser_p_inner(s, model, cfg, sigma, rng);
    const auto xs = data.sample(rng, cfg.batch);
    const auto eps = s.q.draw_noise(rng, cfg.batch);
    const auto zs = mlp_forward_batch(s.q.generator, s.q.inputs(xs, eps), xs.size());
    std::vector<double> kernel;
    kernel.reserve(zs.size());
    const std::size_t d = model.latent_dim;
    for (std::size_t b = 0; b < xs.size(); ++b) {
        const auto k = joint_scores_from_denoisers(*s.denoiser_q, *s.denoiser_p, xs[b],
                                                   std::span<const double>(zs).subspan(b * d, d));
        kernel.insert(kernel.end(), k.begin(), k.end());
    }
    return detail::apply_psi(s, gradient_from_score_kernel(s.q, xs, eps, kernel), inner, std::nan(""));
}

// Prior-contrastive adversarial and denoising estimates on the same minibatch,
// blended as alpha * adversarial + (1 - alpha) * denoising.
inline StepMetrics hybrid_outer_step(RunState& s, const LatentVariableModel& model, const Dataset& data,
                                     const TrainLoopConfig& cfg, Rng& rng) {
    if (!s.ratio || !s.denoiser_q) throw ConfigError("hybrid: run state needs a ratio estimator and a denoiser");
    const double sigma = cfg.noise.at(s.step);
    const double inner = detail::fit_ratio_inner(s, pc_disc_sampler(s.q, model, data), cfg, rng) /
                         static_cast<double>(cfg.batch);
    detail::fit_denoiser_q_inner(s, data, cfg, sigma, rng);
    if (!model.explicit_prior()) detail::fit_denoiser_p_inner(s, model, cfg, sigma, rng);
    const auto xs = data.sample(rng, cfg.batch);
    const auto eps = s.q.draw_noise(rng, cfg.batch);
    const auto zs = mlp_forward_batch(s.q.generator, s.q.inputs(xs, eps), xs.size());
    const auto adv = pc_adv_gradient(s.q, *s.ratio, model, xs, eps);
    const auto den = gradient_from_score_kernel(s.q, xs, eps, pc_den_kernel(s, model, xs, zs));
    auto m = detail::apply_psi(s, hybrid_gradient(adv.gradient, den, cfg.hybrid_alpha), inner, adv.objective);
    m.elbo_estimate = -adv.objective;
    return m;
}

inline StepMetrics outer_step(RunState& s, const LatentVariableModel& model, const Dataset& data,
                              const TrainLoopConfig& cfg, Rng& rng) {
    switch (cfg.method) {
        case Method::pc_adv: return pc_adv_outer_step(s, model, data, cfg, rng);
        case Method::jc_adv: return jc_adv_outer_step(s, model, data, cfg, rng);
        case Method::pc_den: return pc_den_outer_step(s, model, data, cfg, rng);
        case Method::jc_den: return jc_den_outer_step(s, model, data, cfg, rng);
        default: return hybrid_outer_step(s, model, data, cfg, rng);
    }
}

// Runs cfg.outer_steps outer iterations. A NumericError is re-raised with the
// outer step index at which it occurred.
inline void train(RunState& s, const LatentVariableModel& model, const Dataset& data, const TrainLoopConfig& cfg,
                  Rng& rng, const std::function<void(const StepMetrics&)>& on_step = {}) {
    cfg.validate();
    for (std::size_t t = 0; t < cfg.outer_steps; ++t) {
        StepMetrics m;
        TrainLoopConfig scheduled = cfg;
        const double scale = cfg.lr_scale(s.step);
        scheduled.psi_learning_rate *= scale;
        scheduled.phi_learning_rate *= scale;
        s.psi_opt.config.learning_rate = scheduled.psi_learning_rate;
        try {
            m = outer_step(s, model, data, scheduled, rng);
        } catch (const NumericError& e) {
            throw NumericError(std::string("outer loop: ") + e.what(), static_cast<std::ptrdiff_t>(s.step));
        }
        if (!std::isfinite(m.psi_displacement_norm))
            throw NumericError("outer loop: non-finite generator update", static_cast<std::ptrdiff_t>(m.step));
        s.history.push_back(m);
        if (on_step) on_step(m);
    }
}

}  // namespace ivi
