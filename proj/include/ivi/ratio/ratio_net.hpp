#pragma once

#include <functional>
#include <span>
#include <vector>

#include "ivi/models/distributions.hpp"
#include "ivi/models/latent_model.hpp"
#include "ivi/numerics/mlp.hpp"

namespace ivi {

// Pairs of (observation, latent). zs is row-major size() x latent_dim.
struct SampleBatch {
    std::vector<double> xs;
    std::vector<double> zs;

    std::size_t size() const { return xs.size(); }
};

// A log density-ratio estimator r(x, z) = net(features(x), z) + lambda * log p(x | z).
// The output is an unconstrained real; sigmoid(r) is the classifier probability
// that (x, z) came from the numerator distribution.
struct RatioNet {
    MlpParams net;
    std::uint32_t latent_dim = 0;
    double ensemble_weight = 0.0;
    std::function<std::vector<double>(double)> features;
    std::function<double(double, std::span<const double>)> reference_loglik;
    std::function<Var(double, std::span<const Var>)> reference_loglik_tape;

    static RatioNet make(const LatentVariableModel& model, std::span<const std::uint32_t> hidden, Activation act,
                         Rng& rng, double ensemble_weight = 0.0) {
        if (ensemble_weight < 0.0 || ensemble_weight > 1.0)
            throw ConfigError("RatioNet: ensemble_weight must lie in [0, 1]");
        RatioNet r;
        r.latent_dim = model.latent_dim;
        r.features = model.features;
        r.ensemble_weight = ensemble_weight;
        if (ensemble_weight > 0) {
            if (!model.explicit_likelihood())
                throw ConfigError("RatioNet: ensemble_weight > 0 requires an explicit likelihood");
            r.reference_loglik = model.likelihood_logpdf;
            r.reference_loglik_tape = model.likelihood_logpdf_tape;
        }
        r.net = MlpParams::make(model.feature_dim() + model.latent_dim, hidden, act, 1);
        r.net.init_glorot(rng);
        return r;
    }

    std::vector<double> inputs(std::span<const double> xs, std::span<const double> zs) const {
        if (zs.size() != xs.size() * latent_dim) throw ConfigError("RatioNet: batch length mismatch");
        std::vector<double> in;
        in.reserve(xs.size() * net.input_dim());
        for (std::size_t b = 0; b < xs.size(); ++b) {
            const auto f = features(xs[b]);
            in.insert(in.end(), f.begin(), f.end());
            in.insert(in.end(), zs.begin() + b * latent_dim, zs.begin() + (b + 1) * latent_dim);
        }
        if (in.size() != xs.size() * net.input_dim()) throw ConfigError("RatioNet: feature size mismatch");
        return in;
    }

    // Network part only (no ensemble term), batched.
    std::vector<double> residual(std::span<const double> xs, std::span<const double> zs) const {
        return mlp_forward_batch(net, inputs(xs, zs), xs.size());
    }

    std::vector<double> evaluate(std::span<const double> xs, std::span<const double> zs) const {
        auto out = residual(xs, zs);
        if (ensemble_weight > 0)
            for (std::size_t b = 0; b < xs.size(); ++b)
                out[b] += ensemble_weight * reference_loglik(xs[b], zs.subspan(b * latent_dim, latent_dim));
        return out;
    }

    double operator()(double x, std::span<const double> z) const { return evaluate({&x, 1}, z)[0]; }
};

// A RatioNet registered on a tape. With ParamMode::frozen the ratio acts as a
// fixed function of its inputs: gradients reach z (and whatever produced it)
// but the network parameters never receive adjoints.
class BoundRatio {
public:
    BoundRatio(Tape& tape, const RatioNet& r, ParamMode mode) : ratio_(&r), net_(tape, r.net, mode) {}

    // zs is a B x latent_dim block; returns one node per row.
    std::vector<Var> apply(std::span<const double> xs, const Block& zs) const {
        if (zs.rows != xs.size() || zs.cols != ratio_->latent_dim)
            throw ConfigError("BoundRatio: batch length mismatch");
        Tape& tape = *zs.tape;
        std::vector<double> feats;
        for (double x : xs) {
            const auto f = ratio_->features(x);
            feats.insert(feats.end(), f.begin(), f.end());
        }
        const auto n_feat = static_cast<std::uint32_t>(xs.empty() ? 0 : feats.size() / xs.size());
        Block in = n_feat > 0 ? tape.concat_cols(tape.leaves(feats, zs.rows, n_feat), zs) : zs;
        Block out = net_.apply(in);
        std::vector<Var> r(xs.size());
        for (std::size_t b = 0; b < xs.size(); ++b) {
            r[b] = out[b];
            if (ratio_->ensemble_weight > 0) {
                std::vector<Var> zrow(zs.cols);
                for (std::uint32_t c = 0; c < zs.cols; ++c) zrow[c] = zs.at(b, c);
                r[b] = r[b] + ratio_->reference_loglik_tape(xs[b], zrow) * ratio_->ensemble_weight;
            }
        }
        return r;
    }

    std::vector<Var> apply(std::span<const double> xs, std::span<const double> zs) const {
        if (zs.size() != xs.size() * ratio_->latent_dim) throw ConfigError("BoundRatio: batch length mismatch");
        Tape& tape = *net_.params().tape;
        return apply(xs, tape.leaves(zs, static_cast<std::uint32_t>(xs.size()), ratio_->latent_dim));
    }

    const BoundMlp& net() const { return net_; }

private:
    const RatioNet* ratio_;
    BoundMlp net_;
};

// Constant view of a ratio estimator for a generator update: the returned binding
// propagates adjoints into the latents only, never into the ratio parameters.
inline BoundRatio freeze_ratio_for_psi_step(Tape& tape, const RatioNet& r) {
    return BoundRatio(tape, r, ParamMode::frozen);
}

// log q(z) - log p(z) for diagonal Gaussians.
inline double analytic_gaussian_log_ratio(const GaussianSpec& q, const GaussianSpec& p, std::span<const double> z) {
    return gaussian_logpdf(q, z) - gaussian_logpdf(p, z);
}

}  // namespace ivi
