#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "ivi/eval/diagnostics.hpp"
#include "ivi/models/linear_gaussian.hpp"
#include "ivi/models/sprinkler.hpp"
#include "ivi/ratio/discriminator.hpp"
#include "ivi/ratio/ratio_net.hpp"
#include "support.hpp"

using namespace ivi;

namespace {

const double kLn2 = std::numbers::ln2;

RatioNet constant_ratio(const LatentVariableModel& m, double c) {
    Rng rng(1);
    const std::vector<std::uint32_t> hidden{8};
    RatioNet r = RatioNet::make(m, hidden, Activation::relu, rng);
    for (auto& v : r.net.values()) v = 0.0;
    r.net.bias(r.net.layers().size() - 1)[0] = c;
    return r;
}

// r(z) = w z + b exactly: a single identity layer on a 1-D latent.
RatioNet affine_ratio(double w, double b) {
    RatioNet r;
    r.latent_dim = 1;
    r.features = [](double) { return std::vector<double>{}; };
    const std::uint32_t widths[] = {1, 1};
    const Activation acts[] = {Activation::identity};
    r.net = MlpParams(widths, acts);
    r.net.weight(0)[0] = w;
    r.net.bias(0)[0] = b;
    return r;
}

double loss_value(const RatioNet& r, const std::vector<double>& xs, const std::vector<double>& zp,
                  const std::vector<double>& zq) {
    Tape tape;
    BoundRatio bound(tape, r, ParamMode::trainable);
    return pc_disc_loss(bound, tape, xs, zp, zq).value();
}

std::vector<double> normals(Rng& rng, std::size_t n, double mean) {
    std::vector<double> v(n);
    for (auto& e : v) e = rng.normal(mean, 1.0);
    return v;
}

TEST(PcDiscLoss, ZeroRatioGivesTwoBLn2) {
    const auto m = sprinkler_model();
    const auto r = constant_ratio(m, 0.0);
    Rng rng(2);
    const std::size_t B = 37;
    std::vector<double> xs(B);
    for (auto& x : xs) x = rng.exponential(5.0);
    EXPECT_NEAR(loss_value(r, xs, gaussian_sample(rng, B, std::vector<double>{0, 0}, 1.0),
                           gaussian_sample(rng, B, std::vector<double>{0, 0}, 2.0)),
                2.0 * B * kLn2, 1e-12);
}

TEST(PcDiscLoss, ConstantRatio) {
    const auto m = sprinkler_model();
    const std::size_t B = 16;
    Rng rng(3);
    const std::vector<double> xs(B, 1.0);
    const auto zp = gaussian_sample(rng, B, std::vector<double>{0, 0}, 1.0);
    const auto zq = gaussian_sample(rng, B, std::vector<double>{1, 0}, 1.0);
    for (double c : {-3.0, 1.0, 2.5}) {
        const double got = loss_value(constant_ratio(m, c), xs, zp, zq);
        EXPECT_NEAR(got, B * (softplus(c) + softplus(-c)), 1e-12);
        EXPECT_GT(got, 2.0 * B * kLn2);
    }
    EXPECT_NEAR(softplus(1.0) + softplus(-1.0), 1.626523, 1e-6);
}

TEST(PcDiscLoss, LengthMismatchThrows) {
    const auto m = sprinkler_model();
    const auto r = constant_ratio(m, 0.0);
    const std::vector<double> xs(3, 1.0), z3(6, 0.0), z2(4, 0.0);
    EXPECT_THROW(loss_value(r, xs, z3, z2), ConfigError);
    Tape tape;
    BoundRatio bound(tape, r, ParamMode::trainable);
    SampleBatch a{{1.0, 2.0}, {0, 0, 0, 0}}, b{{1.0}, {0, 0}};
    EXPECT_THROW(jc_disc_loss(bound, tape, a, b), ConfigError);
}

// The optimal logistic loss for q = N(1,1) against p = N(0,1), by quadrature,
// is attained by r*(z) = z - 0.5 and lies below 2 ln 2 per pair.
TEST(PcDiscLoss, OptimalGaussianRatioBeatsZero) {
    auto pdf = [](double z, double m) { return std::exp(-0.5 * (z - m) * (z - m)) / std::sqrt(2 * std::numbers::pi); };
    auto expected_loss = [&](double w, double b) {
        double acc = 0;
        const int n = 40000;
        const double lo = -12, hi = 13, h = (hi - lo) / n;
        for (int i = 0; i <= n; ++i) {
            const double z = lo + i * h;
            const double wt = (i == 0 || i == n) ? 0.5 : 1.0;
            const double r = w * z + b;
            acc += wt * h * (pdf(z, 0.0) * softplus(r) - pdf(z, 1.0) * softminus(r));
        }
        return acc;
    };
    const double best = expected_loss(1.0, -0.5);
    EXPECT_LT(best, 2 * kLn2);
    EXPECT_NEAR(expected_loss(0.0, 0.0), 2 * kLn2, 1e-9);
    for (double dw : {-0.2, 0.2})
        for (double db : {-0.2, 0.0, 0.2}) EXPECT_GT(expected_loss(1.0 + dw, -0.5 + db), best);
    EXPECT_GT(expected_loss(1.0, -0.3), best);

    // The tape loss of the exact affine ratio agrees with the quadrature on a large sample.
    Rng rng(4);
    const std::size_t B = 200000;
    const std::vector<double> xs(B, 0.0);
    const double per_pair = loss_value(affine_ratio(1.0, -0.5), xs, normals(rng, B, 0.0), normals(rng, B, 1.0)) / B;
    EXPECT_NEAR(per_pair, best, 0.01);
}

// Swapping the streams and negating the network output leaves the loss unchanged.
TEST(PcDiscLoss, RoleAntisymmetry) {
    const auto m = sprinkler_model();
    Rng rng(5);
    const std::vector<std::uint32_t> hidden{16, 16};
    RatioNet r = RatioNet::make(m, hidden, Activation::relu, rng);
    RatioNet neg = r;
    const auto last = neg.net.layers().size() - 1;
    for (auto& w : neg.net.weight(last)) w = -w;
    for (auto& b : neg.net.bias(last)) b = -b;
    for (auto& b : r.net.bias(last)) b = 0.3;
    for (auto& b : neg.net.bias(last)) b = -0.3;
    const std::size_t B = 20;
    std::vector<double> xs(B);
    for (auto& x : xs) x = rng.exponential(4.0);
    const auto zp = gaussian_sample(rng, B, std::vector<double>{0, 0}, 1.0);
    const auto zq = gaussian_sample(rng, B, std::vector<double>{1, -1}, 0.5);
    EXPECT_NEAR(loss_value(r, xs, zp, zq), loss_value(neg, xs, zq, zp), 1e-10);
}

TEST(JcDiscLoss, ZeroRatioGivesTwoBLn2) {
    const auto m = sprinkler_model();
    const auto s = constant_ratio(m, 0.0);
    Rng rng(6);
    const auto q = joint_samples(m, 25, rng);
    const auto p = joint_samples(m, 25, rng);
    Tape tape;
    BoundRatio bound(tape, s, ParamMode::trainable);
    EXPECT_NEAR(jc_disc_loss(bound, tape, q, p).value(), 50 * kLn2, 1e-12);
}

// With identical streams the trained s stays near the flat optimum s = 0.
TEST(JcDiscLoss, IdenticalStreamsTrainToFlat) {
    const auto m = linear_gaussian_model({1.0, 1.0}, 1.0);
    Rng rng(7);
    const std::vector<std::uint32_t> hidden{32, 32};
    RatioNet s = RatioNet::make(m, hidden, Activation::relu, rng);
    AdamState opt(s.net.size(), {});
    const DiscSampler sampler = [&m](Rng& r, std::size_t n) {
        return DiscBatch{joint_samples(m, n, r), joint_samples(m, n, r)};
    };
    test::decayed_fit(1000, 5, 1e-3, 0.1, [&](std::size_t k, double lr) { fit_ratio(s, opt, sampler, {k, 256, lr}, rng); });
    EXPECT_LE(flatness_diagnostic(s, joint_samples(m, 5000, rng)), 0.1);
}

// q set to the exact conjugate posterior: p_D(x) q(z | x) equals the model joint,
// so the trained joint-contrastive ratio is flat.
TEST(JcDiscLoss, ExactPosteriorGivesFlatRatio) {
    const std::vector<double> a{1.0, 1.0};
    const auto m = linear_gaussian_model(a, 1.0);
    auto exact_q_batch = [&](Rng& r, std::size_t n) {
        SampleBatch b;
        for (std::size_t i = 0; i < n; ++i) {
            const double x = m.sample_likelihood(m.sample_prior(r), r);
            const auto post = exact_posterior(a, 1.0, x);
            // Cholesky of the 2x2 covariance.
            const double l11 = std::sqrt(post.covariance(0, 0));
            const double l21 = post.covariance(1, 0) / l11;
            const double l22 = std::sqrt(post.covariance(1, 1) - l21 * l21);
            const double e1 = r.normal(), e2 = r.normal();
            b.xs.push_back(x);
            b.zs.push_back(post.mean[0] + l11 * e1);
            b.zs.push_back(post.mean[1] + l21 * e1 + l22 * e2);
        }
        return b;
    };
    Rng rng(8);
    const std::vector<std::uint32_t> hidden{32, 32};
    RatioNet s = RatioNet::make(m, hidden, Activation::relu, rng);
    AdamState opt(s.net.size(), {});
    const DiscSampler sampler = [&](Rng& r, std::size_t n) {
        return DiscBatch{exact_q_batch(r, n), joint_samples(m, n, r)};
    };
    test::decayed_fit(1000, 5, 1e-3, 0.1, [&](std::size_t k, double lr) { fit_ratio(s, opt, sampler, {k, 256, lr}, rng); });
    EXPECT_LE(flatness_diagnostic(s, joint_samples(m, 5000, rng)), 0.1);
}

TEST(FitRatio, ZeroStepsLeavesParametersUnchanged) {
    const auto m = test::gaussian_1d_model();
    Rng rng(9);
    const std::vector<std::uint32_t> hidden{8};
    RatioNet r = RatioNet::make(m, hidden, Activation::relu, rng);
    const std::vector<double> before(r.net.values().begin(), r.net.values().end());
    AdamState opt(r.net.size(), {});
    const auto rep = fit_ratio(r, opt, test::gaussian_pair_sampler(1, 1, 0, 1), {0, 64, 1e-3}, rng);
    EXPECT_EQ(rep.steps, 0u);
    EXPECT_EQ(std::vector<double>(r.net.values().begin(), r.net.values().end()), before);
    EXPECT_EQ(opt.step, 0u);
}

TEST(FitRatio, RunsExactlyKSteps) {
    const auto m = test::gaussian_1d_model();
    Rng rng(9);
    const std::vector<std::uint32_t> hidden{8};
    RatioNet r = RatioNet::make(m, hidden, Activation::relu, rng);
    AdamState opt(r.net.size(), {});
    std::size_t calls = 0;
    const auto inner = test::gaussian_pair_sampler(1, 1, 0, 1);
    const DiscSampler counting = [&](Rng& g, std::size_t n) {
        ++calls;
        return inner(g, n);
    };
    const auto rep = fit_ratio(r, opt, counting, {7, 32, 1e-3}, rng);
    EXPECT_EQ(rep.steps, 7u);
    EXPECT_EQ(calls, 7u);
    EXPECT_EQ(opt.step, 7u);
}

TEST(FitRatio, DeterministicUnderSeed) {
    auto run = [] {
        const auto m = test::gaussian_1d_model();
        Rng rng(10);
        const std::vector<std::uint32_t> hidden{16};
        RatioNet r = RatioNet::make(m, hidden, Activation::relu, rng);
        AdamState opt(r.net.size(), {});
        fit_ratio(r, opt, test::gaussian_pair_sampler(1, 1, 0, 1), {50, 64, 1e-3}, rng);
        return std::vector<double>(r.net.values().begin(), r.net.values().end());
    };
    EXPECT_EQ(run(), run());
}

TEST(FitRatio, NonFiniteLossReportsStep) {
    const auto m = test::gaussian_1d_model();
    Rng rng(11);
    const std::vector<std::uint32_t> hidden{8};
    RatioNet r = RatioNet::make(m, hidden, Activation::relu, rng);
    AdamState opt(r.net.size(), {});
    std::size_t calls = 0;
    const auto inner = test::gaussian_pair_sampler(1, 1, 0, 1);
    const DiscSampler poisoned = [&](Rng& g, std::size_t n) {
        auto b = inner(g, n);
        if (++calls == 3) b.q_side.zs[0] = std::nan("");
        return b;
    };
    try {
        fit_ratio(r, opt, poisoned, {5, 16, 1e-3}, rng);
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_EQ(e.step(), 2);
    }
}

TEST(FitRatio, TrainedLossBelowChanceOnHeldOutData) {
    const auto r = test::train_gaussian_ratio(12, 1000, 128);
    Rng rng(13);
    const std::size_t B = 20000;
    const std::vector<double> xs(B, 0.0);
    const double held_out = loss_value(r, xs, normals(rng, B, 0.0), normals(rng, B, 1.0));
    EXPECT_LT(held_out, 2.0 * B * kLn2);
}

TEST(RatioNet, EnsembleNeedsExplicitLikelihood) {
    const auto m = sprinkler_model().with_implicit_likelihood();
    Rng rng(1);
    const std::vector<std::uint32_t> hidden{4};
    EXPECT_THROW(RatioNet::make(m, hidden, Activation::relu, rng, 1.0), ConfigError);
    EXPECT_NO_THROW(RatioNet::make(m, hidden, Activation::relu, rng, 0.0));
    EXPECT_THROW(RatioNet::make(sprinkler_model(), hidden, Activation::relu, rng, 1.5), ConfigError);
}

TEST(RatioNet, EnsembleAddsWeightedLogLikelihood) {
    const auto m = sprinkler_model();
    Rng rng(2);
    const std::vector<std::uint32_t> hidden{8};
    const RatioNet plain = RatioNet::make(m, hidden, Activation::relu, rng, 0.0);
    RatioNet ens = plain;
    ens.ensemble_weight = 0.5;
    ens.reference_loglik = m.likelihood_logpdf;
    ens.reference_loglik_tape = m.likelihood_logpdf_tape;
    const std::vector<double> z{0.4, 1.2};
    const double x = 6.0;
    EXPECT_NEAR(ens(x, z), plain(x, z) + 0.5 * m.likelihood_logpdf(x, z), 1e-12);
    Tape tape;
    BoundRatio bound(tape, ens, ParamMode::frozen);
    EXPECT_NEAR(bound.apply(std::vector<double>{x}, z)[0].value(), ens(x, z), 1e-12);
}

TEST(AnalyticRatio, Examples) {
    const auto p = GaussianSpec::isotropic(1, 0.0, 1.0);
    for (double z : {-2.0, 0.0, 1.7}) {
        EXPECT_NEAR(analytic_gaussian_log_ratio(p, p, std::vector<double>{z}), 0.0, 1e-15);
        EXPECT_NEAR(analytic_gaussian_log_ratio(GaussianSpec::isotropic(1, 1.0, 1.0), p, std::vector<double>{z}),
                    z - 0.5, 1e-12);
    }
    EXPECT_NEAR(analytic_gaussian_log_ratio(GaussianSpec::isotropic(1, 0.0, std::sqrt(2.0)), p,
                                            std::vector<double>{0.0}),
                -std::log(std::sqrt(2.0)), 1e-12);
    EXPECT_NEAR(-std::log(std::sqrt(2.0)), -0.346574, 1e-6);
}

// With q equal to the true posterior the log ratio is log p(x | z) - log p(x). The
// residual on top of the log-likelihood then only has to learn a function of x,
// so over z it varies less than a ratio learned from scratch.
TEST(RatioNet, EnsembleResidualIsFlatterThanPlainRatio) {
    const std::vector<double> a{1.0, 1.0};
    const auto m = linear_gaussian_model(a, 1.0);
    Rng data_rng(20);
    const auto data = Dataset::from_model(m, 20000, data_rng);
    auto exact_sample = [&](double x, Rng& r) {
        const auto post = exact_posterior(a, 1.0, x);
        const double l11 = std::sqrt(post.covariance(0, 0));
        const double l21 = post.covariance(1, 0) / l11;
        const double l22 = std::sqrt(post.covariance(1, 1) - l21 * l21);
        const double e1 = r.normal(), e2 = r.normal();
        return std::vector<double>{post.mean[0] + l11 * e1, post.mean[1] + l21 * e1 + l22 * e2};
    };
    const DiscSampler sampler = [&](Rng& r, std::size_t n) {
        DiscBatch b;
        b.p_side.xs = data.sample(r, n);
        b.q_side.xs = b.p_side.xs;
        for (double x : b.p_side.xs) {
            const auto zp = m.sample_prior(r);
            const auto zq = exact_sample(x, r);
            b.p_side.zs.insert(b.p_side.zs.end(), zp.begin(), zp.end());
            b.q_side.zs.insert(b.q_side.zs.end(), zq.begin(), zq.end());
        }
        return b;
    };
    auto train = [&](double lambda) {
        Rng rng(21);
        const std::vector<std::uint32_t> hidden{32, 32};
        RatioNet r = RatioNet::make(m, hidden, Activation::relu, rng, lambda);
        AdamState opt(r.net.size(), {});
        test::decayed_fit(2000, 5, 1e-3, 0.1, [&](std::size_t k, double lr) { fit_ratio(r, opt, sampler, {k, 256, lr}, rng); });
        return r;
    };
    const RatioNet full = train(0.0), ens = train(1.0);
    const GridSpec spec{-4, 4, -4, 4, 60, 60};
    for (double x : {-2.0, 0.0, 2.0}) {
        const Grid2D post = grid_posterior(m, x, spec);
        const auto zs = spec.centres();
        const std::vector<double> xs(spec.cells(), x);
        auto weighted_variance = [&](const std::vector<double>& v) {
            double w = 0, mean = 0, var = 0;
            for (std::size_t c = 0; c < v.size(); ++c) {
                w += post.values[c];
                mean += post.values[c] * v[c];
            }
            mean /= w;
            for (std::size_t c = 0; c < v.size(); ++c) var += post.values[c] * (v[c] - mean) * (v[c] - mean);
            return var / w;
        };
        const double residual_var = weighted_variance(ens.residual(xs, zs));
        const double full_var = weighted_variance(full.evaluate(xs, zs));
        EXPECT_LE(residual_var, full_var) << "x=" << x;
    }
}

}  // namespace
