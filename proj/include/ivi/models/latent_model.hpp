#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ivi/error.hpp"
#include "ivi/numerics/rng.hpp"
#include "ivi/numerics/tape.hpp"

namespace ivi {

// A latent-variable model p(z) p(x | z) with scalar observations. Samplers are
// always present; each log-density may be absent, in which case that component
// is implicit. Densities come in two flavours: plain doubles, and tape nodes so
// that gradients with respect to z can be taken.
struct LatentVariableModel {
    std::string name;
    std::uint32_t latent_dim = 0;

    std::function<std::vector<double>(Rng&)> sample_prior;
    std::function<double(std::span<const double> z, Rng&)> sample_likelihood;

    std::function<double(std::span<const double> z)> prior_logpdf;
    std::function<Var(std::span<const Var> z)> prior_logpdf_tape;
    std::function<double(double x, std::span<const double> z)> likelihood_logpdf;
    std::function<Var(double x, std::span<const Var> z)> likelihood_logpdf_tape;

    // Network-facing encoding of an observation.
    std::function<std::vector<double>(double x)> features;

    bool explicit_prior() const { return static_cast<bool>(prior_logpdf) && static_cast<bool>(prior_logpdf_tape); }
    bool explicit_likelihood() const {
        return static_cast<bool>(likelihood_logpdf) && static_cast<bool>(likelihood_logpdf_tape);
    }
    bool explicit_joint() const { return explicit_prior() && explicit_likelihood(); }

    std::uint32_t feature_dim() const { return static_cast<std::uint32_t>(features(0.0).size()); }

    double joint_logpdf(double x, std::span<const double> z) const {
        if (!explicit_joint()) throw ConfigError(name + ": joint density requires explicit prior and likelihood");
        return prior_logpdf(z) + likelihood_logpdf(x, z);
    }

    // d/dz log p(x, z), by reverse-mode differentiation.
    std::vector<double> joint_score(double x, std::span<const double> z) const {
        if (!explicit_joint()) throw ConfigError(name + ": joint score requires explicit prior and likelihood");
        return score_of([&](std::span<const Var> zv) { return prior_logpdf_tape(zv) + likelihood_logpdf_tape(x, zv); },
                        z);
    }

    std::vector<double> likelihood_score(double x, std::span<const double> z) const {
        if (!explicit_likelihood()) throw ConfigError(name + ": likelihood score requires an explicit likelihood");
        return score_of([&](std::span<const Var> zv) { return likelihood_logpdf_tape(x, zv); }, z);
    }

    std::vector<double> prior_score(std::span<const double> z) const {
        if (!explicit_prior()) throw ConfigError(name + ": prior score requires an explicit prior");
        return score_of([&](std::span<const Var> zv) { return prior_logpdf_tape(zv); }, z);
    }

    // Copies with a component demoted to sampler-only.
    LatentVariableModel with_implicit_prior() const {
        LatentVariableModel m = *this;
        m.prior_logpdf = nullptr;
        m.prior_logpdf_tape = nullptr;
        return m;
    }

    LatentVariableModel with_implicit_likelihood() const {
        LatentVariableModel m = *this;
        m.likelihood_logpdf = nullptr;
        m.likelihood_logpdf_tape = nullptr;
        return m;
    }

private:
    template <class F>
    std::vector<double> score_of(F&& f, std::span<const double> z) const {
        Tape tape;
        Block zb = tape.leaves(z);
        std::vector<Var> zv(z.size());
        for (std::size_t i = 0; i < z.size(); ++i) zv[i] = zb[i];
        tape.backward(f(std::span<const Var>(zv)));
        const auto g = tape.adjoints(zb);
        return {g.begin(), g.end()};
    }
};

}  // namespace ivi
