#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "ficlab/averaging.hpp"

using namespace ficlab;
using Catch::Approx;

namespace {

AveragingContext toy_context(double tau0 = 0.3) {
    Vec omega(3);
    omega << 1.0, -0.6, 0.8;
    Mat Q(3, 3);
    Q << 1.8, 0.2, -0.1,
         0.2, 1.4, 0.3,
        -0.1, 0.3, 1.6;
    LimitExperiment exp(tau0, omega, Q);
    return make_averaging_context(exp, all_masks(3));
}

struct EnvGuard {
    explicit EnvGuard(const char* value) {
        if (value) setenv("FICLAB_THREADS", value, 1);
        else unsetenv("FICLAB_THREADS");
    }
    ~EnvGuard() { unsetenv("FICLAB_THREADS"); }
};

} // namespace

TEST_CASE("every scheme returns a probability vector over the candidates") {
    AveragingContext ctx = toy_context();
    Vec D(3);
    D << 1.5, -0.4, 2.0;
    std::vector<WeightScheme> schemes = {
        WeightScheme::exp_fixed(1.0), WeightScheme::exp_cd(),
        WeightScheme::post(ScoreVariant::median), WeightScheme::post(ScoreVariant::fic_t),
        WeightScheme::post(ScoreVariant::fic_u), WeightScheme::post(ScoreVariant::quantile, 0.25),
        WeightScheme::aic(), WeightScheme::wide()};
    for (const auto& s : schemes) {
        Vec w = model_weights(ctx, D, s);
        REQUIRE(w.size() == 8);
        CHECK(w.sum() == Approx(1.0).margin(1e-12));
        CHECK(w.minCoeff() >= 0.0);
    }
}

TEST_CASE("softmax weights: closed form, shift invariance, uniform ties") {
    Vec s(2);
    s << 1.0, 2.0;
    Vec w = exp_weights(s, 1.0);
    CHECK(w[0] == Approx(1.0 / (1.0 + std::exp(-1.0))).margin(1e-12));
    CHECK(w[1] == Approx(std::exp(-1.0) / (1.0 + std::exp(-1.0))).margin(1e-12));
    CHECK(w[0] == Approx(0.731058578630).margin(1e-9));

    Vec shifted = s.array() + 57.0;
    Vec w2 = exp_weights(shifted, 1.0);
    CHECK((w - w2).cwiseAbs().maxCoeff() < 1e-12);

    Vec equal = Vec::Constant(5, 3.3);
    Vec u = exp_weights(equal, 2.0);
    for (int k = 0; k < 5; ++k) CHECK(u[k] == Approx(0.2).margin(1e-12));

    CHECK(exp_weights(s, 0.0)[0] == Approx(0.5).margin(1e-12)); // lambda 0: uniform
    Vec bad(2);
    bad << 1.0, std::nan("");
    CHECK_THROWS_AS(exp_weights(bad, 1.0), std::invalid_argument);
}

TEST_CASE("post-selection puts unit weight on the best score") {
    AveragingContext ctx = toy_context();
    Rng rng(61);
    for (int trial = 0; trial < 50; ++trial) {
        Vec D(3);
        for (int j = 0; j < 3; ++j) D[j] = 3.0 * (2.0 * rng.uniform() - 1.0);
        for (ScoreVariant v : {ScoreVariant::fic_u, ScoreVariant::fic_t, ScoreVariant::median}) {
            Vec w = model_weights(ctx, D, WeightScheme::post(v));
            int ones = 0, pick = -1;
            for (int k = 0; k < w.size(); ++k)
                if (w[k] == 1.0) { ++ones; pick = k; }
            REQUIRE(ones == 1);
            CHECK(w.sum() == Approx(1.0).margin(1e-15));

            // recompute the score by hand and confirm the argmin
            double best = 1e300;
            int want = -1;
            for (int k = 0; k < 8; ++k) {
                double raw = ctx.bias_sel.row(k).dot(D);
                double score;
                if (v == ScoreVariant::fic_u)
                    score = ctx.tauS2[k] +
                            (ctx.sigmaS2[k] > 0.0 ? raw * raw - ctx.sigmaS2[k] : 0.0);
                else if (v == ScoreVariant::fic_t)
                    score = ctx.tauS2[k] + std::max(raw * raw - ctx.sigmaS2[k], 0.0);
                else {
                    RmseCD cd;
                    cd.tauS2 = ctx.tauS2[k];
                    cd.sigmaS2 = ctx.sigmaS2[k];
                    cd.is_wide = ctx.sigmaS2[k] <= 0.0;
                    if (!cd.is_wide) cd.b_obs = raw * raw / cd.sigmaS2;
                    score = median_fic(cd);
                }
                if (score < best) { best = score; want = k; }
            }
            CHECK(pick == want);
        }
    }
}

TEST_CASE("limit AIC between narrow and wide reduces to a chi-square gate") {
    Vec omega(2);
    omega << 1.0, 1.0;
    Mat Q(2, 2);
    Q << 1.5, 0.4, 0.4, 1.1;
    LimitExperiment exp(0.0, omega, Q);
    std::vector<SubmodelMask> pair = {SubmodelMask::narrow(2), SubmodelMask::full(2)};
    AveragingContext ctx = make_averaging_context(exp, pair);
    Mat Qinv = spd_inverse(Q, "test");
    Rng rng(9);
    for (int trial = 0; trial < 200; ++trial) {
        Vec D(2);
        D << 4.0 * (rng.uniform() - 0.5), 4.0 * (rng.uniform() - 0.5);
        Vec w = model_weights(ctx, D, WeightScheme::aic());
        bool narrow_kept = w[0] == 1.0;
        CHECK(narrow_kept == (D.dot(Qinv * D) <= 4.0)); // 2 q with q = 2
    }
}

TEST_CASE("always-wide weights require the full model among the candidates") {
    AveragingContext ctx = toy_context();
    Vec D = Vec::Zero(3);
    Vec w = model_weights(ctx, D, WeightScheme::wide());
    CHECK(w[7] == 1.0);
    CHECK(w.head(7).cwiseAbs().maxCoeff() == 0.0);

    LimitExperiment exp = ctx.exp;
    std::vector<SubmodelMask> no_wide = {SubmodelMask::narrow(3), SubmodelMask(0b001, 3)};
    AveragingContext ctx2 = make_averaging_context(exp, no_wide);
    CHECK_THROWS_AS(model_weights(ctx2, D, WeightScheme::wide()), std::invalid_argument);
}

TEST_CASE("custom weights are validated and normalized") {
    AveragingContext ctx = toy_context();
    Vec D = Vec::Zero(3);
    Vec raw = Vec::Zero(8);
    raw[1] = 3.0;
    raw[2] = 1.0;
    Vec w = model_weights(ctx, D, WeightScheme::custom(raw));
    CHECK(w[1] == Approx(0.75).margin(1e-12));
    CHECK(w[2] == Approx(0.25).margin(1e-12));

    CHECK_THROWS_AS(model_weights(ctx, D, WeightScheme::custom(Vec::Ones(3))),
                    std::invalid_argument);
    Vec neg = Vec::Ones(8);
    neg[0] = -0.1;
    CHECK_THROWS_AS(model_weights(ctx, D, WeightScheme::custom(neg)), std::invalid_argument);
    CHECK_THROWS_AS(model_weights(ctx, D, WeightScheme::custom(Vec::Zero(8))),
                    std::invalid_argument);
}

TEST_CASE("exp-cd lambda never drops below one and keeps order sane") {
    AveragingContext ctx = toy_context();
    Vec D(3);
    D << 2.5, 1.0, -1.5;
    Vec w_fixed = model_weights(ctx, D, WeightScheme::exp_fixed(1.0));
    Vec w_cd = model_weights(ctx, D, WeightScheme::exp_cd());
    CHECK(w_cd.sum() == Approx(1.0).margin(1e-12));
    // per-model lambda >= 1 sharpens the penalty on models with low
    // confidence at the wide-model mse, so no such model can gain weight
    // relative to the wide model
    int wide = ctx.wide_index;
    for (int k = 0; k < 8; ++k) {
        if (k == wide) continue;
        CHECK(w_cd[k] / w_cd[wide] <= w_fixed[k] / w_fixed[wide] + 1e-9);
    }
}

TEST_CASE("threshold screening zeroes failing models or throws when none pass") {
    AveragingContext ctx = toy_context();
    Vec D(3);
    D << 1.0, 0.5, -0.5;
    double mse_wide = ctx.mse_wide;
    // at a generous threshold every model survives
    Vec all = threshold_screened_weights(ctx, D, std::sqrt(mse_wide) * 4.0, 0.5);
    CHECK(all.sum() == Approx(1.0).margin(1e-12));
    CHECK(all.minCoeff() > 0.0);
    // an unreachable threshold leaves no survivors
    CHECK_THROWS_AS(threshold_screened_weights(ctx, D, 1e-8, 0.999), std::runtime_error);
    // the wide model always survives a threshold just above its rmse
    Vec some = threshold_screened_weights(ctx, D, std::sqrt(mse_wide) * 1.001, 0.9);
    CHECK(some[ctx.wide_index] > 0.0);
    CHECK(some.sum() == Approx(1.0).margin(1e-12));
}

TEST_CASE("averaged estimate is the weighted mean of the model estimates") {
    Vec w(3), est(3);
    w << 0.2, 0.3, 0.5;
    est << 1.0, 2.0, 4.0;
    CHECK(averaged_estimate(w, est) == Approx(2.8).margin(1e-12));
    CHECK_THROWS_AS(averaged_estimate(w, Vec::Ones(2)), std::invalid_argument);
}

TEST_CASE("always-wide limit sample reproduces the wide-model law") {
    AveragingContext ctx = toy_context(0.4);
    Vec delta(3);
    delta << 0.7, -0.3, 1.1;
    const std::size_t n = 10000;
    LimitSample s = limit_distribution_sample(ctx, delta, WeightScheme::wide(), n, 404);
    REQUIRE(s.draws.size() == n);
    double sd = std::sqrt(ctx.mse_wide);
    CHECK(std::fabs(s.rmse - sd) < 4.0 * s.rmse_se);
    CHECK(std::fabs(s.mean) < 4.0 * sd / std::sqrt(double(n)));

    // distribution-level agreement with N(0, mse_wide)
    std::vector<double> u;
    u.reserve(n);
    for (double v : s.draws) u.push_back(normal_cdf(v / sd));
    std::sort(u.begin(), u.end());
    double ks = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ks = std::max(ks, std::fabs(u[i] - double(i + 1) / double(n)));
        ks = std::max(ks, std::fabs(u[i] - double(i) / double(n)));
    }
    CHECK(ks < 0.02);
}

TEST_CASE("limit samples are identical across seeds reruns and thread counts") {
    AveragingContext ctx = toy_context();
    Vec delta(3);
    delta << 0.5, 0.0, -1.0;
    WeightScheme scheme = WeightScheme::post(ScoreVariant::median);

    LimitSample a, b, c;
    {
        EnvGuard env("1");
        a = limit_distribution_sample(ctx, delta, scheme, 5000, 77);
        b = limit_distribution_sample(ctx, delta, scheme, 5000, 77);
    }
    {
        EnvGuard env("4");
        c = limit_distribution_sample(ctx, delta, scheme, 5000, 77);
    }
    REQUIRE(a.draws.size() == b.draws.size());
    REQUIRE(a.draws.size() == c.draws.size());
    for (std::size_t i = 0; i < a.draws.size(); ++i) {
        CHECK(a.draws[i] == b.draws[i]);
        CHECK(a.draws[i] == c.draws[i]);
    }

    LimitSample d = limit_distribution_sample(ctx, delta, scheme, 5000, 78);
    bool any_differs = false;
    for (std::size_t i = 0; i < a.draws.size(); ++i)
        if (a.draws[i] != d.draws[i]) { any_differs = true; break; }
    CHECK(any_differs);
}

TEST_CASE("degenerate inputs are rejected") {
    AveragingContext ctx = toy_context();
    Vec D = Vec::Zero(3);
    CHECK_THROWS_AS(model_weights(ctx, Vec::Zero(2), WeightScheme::aic()),
                    std::invalid_argument);
    CHECK_THROWS_AS(limit_distribution_sample(ctx, Vec::Zero(3), WeightScheme::wide(), 0, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(limit_distribution_sample(ctx, Vec::Zero(2), WeightScheme::wide(), 10, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(make_averaging_context(ctx.exp, {}), std::invalid_argument);
}
