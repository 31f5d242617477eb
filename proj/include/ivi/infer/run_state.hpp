#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "ivi/denoise/denoiser.hpp"
#include "ivi/models/implicit_posterior.hpp"
#include "ivi/models/latent_model.hpp"
#include "ivi/ratio/discriminator.hpp"

namespace ivi {

enum class Method { pc_adv, jc_adv, pc_den, jc_den, hybrid };

inline std::string to_string(Method m) {
    switch (m) {
        case Method::pc_adv: return "pc_adv";
        case Method::jc_adv: return "jc_adv";
        case Method::pc_den: return "pc_den";
        case Method::jc_den: return "jc_den";
        default: return "hybrid";
    }
}

inline Method method_from_string(const std::string& s) {
    if (s == "pc_adv") return Method::pc_adv;
    if (s == "jc_adv") return Method::jc_adv;
    if (s == "pc_den") return Method::pc_den;
    if (s == "jc_den") return Method::jc_den;
    if (s == "hybrid") return Method::hybrid;
    throw ConfigError("unknown method '" + s + "'");
}

inline bool uses_ratio(Method m) { return m == Method::pc_adv || m == Method::jc_adv || m == Method::hybrid; }
inline bool uses_denoiser(Method m) { return m == Method::pc_den || m == Method::jc_den || m == Method::hybrid; }

struct TrainLoopConfig {
    Method method = Method::pc_adv;
    std::size_t outer_steps = 3000;
    std::size_t inner_steps = 5;
    std::size_t batch = 128;
    double psi_learning_rate = 1e-3;
    double phi_learning_rate = 1e-3;
    NoiseConfig noise;
    // Keep phi (and its optimizer state) across outer steps; false re-initialises it
    // before every inner loop.
    bool warm_start_inner = true;
    double hybrid_alpha = 0.5;
    // Both learning rates decay linearly to this fraction of their initial value by
    // the last outer step; 1 keeps them constant.
    double lr_final_fraction = 1.0;

    double lr_scale(std::size_t outer_step) const {
        if (outer_steps <= 1) return 1.0;
        const double t = std::min(1.0, static_cast<double>(outer_step) / static_cast<double>(outer_steps - 1));
        return 1.0 + (lr_final_fraction - 1.0) * t;
    }

    void validate() const {
        if (batch == 0) throw ConfigError("batch_size must be >= 1");
        if (!(psi_learning_rate > 0) || !(phi_learning_rate > 0)) throw ConfigError("learning rates must be positive");
        if (hybrid_alpha < 0 || hybrid_alpha > 1) throw ConfigError("hybrid_alpha must lie in [0, 1]");
        if (!(lr_final_fraction > 0) || lr_final_fraction > 1) throw ConfigError("lr_final_fraction must lie in (0, 1]");
        noise.at(0);
    }
};

struct NetworkConfig {
    std::vector<std::uint32_t> hidden{64, 64};
    std::uint32_t noise_dim = 8;
    Activation generator_activation = Activation::tanh;
    Activation ratio_activation = Activation::relu;
    Activation denoiser_activation = Activation::tanh;
    double ensemble_weight = 0.0;
    bool denoiser_conditioned_on_x = true;
};

// The empirical data distribution p_D: observations drawn uniformly with replacement.
struct Dataset {
    std::vector<double> xs;

    static Dataset from_model(const LatentVariableModel& model, std::size_t n, Rng& rng) {
        Dataset d;
        d.xs.reserve(n);
        for (std::size_t i = 0; i < n; ++i) d.xs.push_back(model.sample_likelihood(model.sample_prior(rng), rng));
        return d;
    }

    std::vector<double> sample(Rng& rng, std::size_t batch) const {
        if (xs.empty()) throw ConfigError("Dataset: no observations");
        std::vector<double> out(batch);
        for (auto& x : out) x = xs[rng.index(xs.size())];
        return out;
    }
};

enum class Provenance { adversarial, denoising, hybrid };

// Gradient of the (approximate) negative ELBO with respect to the generator parameters.
struct GradientEstimate {
    std::vector<double> values;
    Provenance provenance = Provenance::adversarial;
};

struct StepMetrics {
    std::size_t step = 0;
    double inner_loss = std::nan("");
    double psi_objective = std::nan("");
    std::optional<double> elbo_estimate;
    double psi_displacement_norm = 0.0;
};

struct RunState {
    ImplicitPosterior q;
    AdamState psi_opt;
    std::optional<RatioNet> ratio;
    AdamState ratio_opt;
    std::optional<DenoiserNet> denoiser_q;  // fit to p_D(x) q(z | x)
    AdamState denoiser_q_opt;
    std::optional<DenoiserNet> denoiser_p;  // fit to p(x, z) (jc_den) or p(z) (implicit prior)
    AdamState denoiser_p_opt;
    std::size_t step = 0;
    std::vector<StepMetrics> history;
};

inline AdamConfig adam_with_lr(double lr) {
    AdamConfig c;
    c.learning_rate = lr;
    return c;
}

// Fresh generator and whichever auxiliary networks the method needs.
inline RunState init_run_state(const LatentVariableModel& model, const TrainLoopConfig& cfg, const NetworkConfig& net,
                               Rng& rng) {
    cfg.validate();
    RunState s;
    s.q = ImplicitPosterior::make(model, net.noise_dim, net.hidden, net.generator_activation, rng);
    s.psi_opt = AdamState(s.q.generator.size(), adam_with_lr(cfg.psi_learning_rate));
    if (uses_ratio(cfg.method)) {
        s.ratio = RatioNet::make(model, net.hidden, net.ratio_activation, rng,
                                 cfg.method == Method::jc_adv ? 0.0 : net.ensemble_weight);
        s.ratio_opt = AdamState(s.ratio->net.size(), adam_with_lr(cfg.phi_learning_rate));
    }
    if (uses_denoiser(cfg.method)) {
        s.denoiser_q =
            DenoiserNet::make(model, net.hidden, net.denoiser_activation, rng, net.denoiser_conditioned_on_x);
        s.denoiser_q_opt = AdamState(s.denoiser_q->net.size(), adam_with_lr(cfg.phi_learning_rate));
    }
    const bool needs_prior_denoiser =
        (cfg.method == Method::pc_den || cfg.method == Method::hybrid) && !model.explicit_prior();
    if (cfg.method == Method::jc_den || needs_prior_denoiser) {
        s.denoiser_p = DenoiserNet::make(model, net.hidden, net.denoiser_activation, rng,
                                         cfg.method == Method::jc_den && net.denoiser_conditioned_on_x);
        s.denoiser_p_opt = AdamState(s.denoiser_p->net.size(), adam_with_lr(cfg.phi_learning_rate));
    }
    return s;
}

}  // namespace ivi
