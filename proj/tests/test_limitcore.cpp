#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ficlab/limitcore.hpp"

using namespace ficlab;
using Catch::Approx;

namespace {

Mat random_spd(int q, Rng& rng) {
    Mat A(q, q);
    for (int i = 0; i < q; ++i)
        for (int j = 0; j < q; ++j) A(i, j) = rng.normal();
    return A * A.transpose() + 0.4 * double(q) * Mat::Identity(q, q);
}

Vec random_vec(int q, Rng& rng) {
    Vec v(q);
    for (int j = 0; j < q; ++j) v[j] = 2.0 * rng.uniform() - 1.0;
    return v;
}

} // namespace

TEST_CASE("mask enumeration is size-major then bitmask order") {
    auto masks = all_masks(3);
    REQUIRE(masks.size() == 8);
    const char* expect[] = {"000", "100", "010", "001", "110", "101", "011", "111"};
    for (int k = 0; k < 8; ++k) CHECK(masks[k].label() == expect[k]);
    CHECK(masks.front().is_narrow());
    CHECK(masks.back().is_full());
    CHECK(all_masks(1).size() == 2);
    CHECK(all_masks(5).size() == 32);
}

TEST_CASE("mask basics: contains, size, indices, bounds") {
    SubmodelMask S(0b101, 3);
    CHECK(S.contains(0));
    CHECK_FALSE(S.contains(1));
    CHECK(S.contains(2));
    CHECK(S.size() == 2);
    CHECK(S.indices() == std::vector<int>{0, 2});
    CHECK(S.label() == "101");
    CHECK_THROWS_AS(SubmodelMask(0b100, 2), std::invalid_argument);
    CHECK_THROWS_AS(SubmodelMask(0, -1), std::invalid_argument);
}

TEST_CASE("experiment validation rejects broken inputs") {
    Vec w = Vec::Ones(2);
    Mat Q = Mat::Identity(2, 2);
    CHECK_NOTHROW(LimitExperiment(0.5, w, Q));
    CHECK_THROWS_AS(LimitExperiment(-0.1, w, Q), std::invalid_argument);
    Mat asym = Q;
    asym(0, 1) = 0.5; // not mirrored
    CHECK_THROWS_AS(LimitExperiment(0.5, w, asym), std::invalid_argument);
    Mat npd = Q;
    npd(0, 0) = -1.0;
    CHECK_THROWS_AS(LimitExperiment(0.5, w, npd), std::invalid_argument);
    CHECK_THROWS_AS(LimitExperiment(0.5, w, Mat::Identity(3, 3)), std::invalid_argument);
}

TEST_CASE("spd_inverse inverts and rejects non-positive matrices") {
    Rng rng(11);
    Mat Q = random_spd(4, rng);
    Mat inv = spd_inverse(Q, "test");
    CHECK((Q * inv - Mat::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-9);
    Mat sing = Mat::Zero(2, 2);
    CHECK_THROWS(spd_inverse(sing, "test"));
}

TEST_CASE("projection matrices: idempotent, trace |S|, G Q symmetric") {
    Rng rng(42);
    for (int trial = 0; trial < 1000; ++trial) {
        int q = 1 + int(rng.next_u64() % 6);
        Mat Q = random_spd(q, rng);
        Vec omega = random_vec(q, rng);
        LimitExperiment exp(rng.uniform(), omega, Q);
        std::uint32_t bits = static_cast<std::uint32_t>(rng.next_u64() & ((1u << q) - 1));
        for (SubmodelMask S : {SubmodelMask(bits, q), SubmodelMask::narrow(q),
                               SubmodelMask::full(q)}) {
            SubmodelGeometry g = geometry(exp, S);
            double scale = std::max(1.0, Q.norm());
            CHECK((g.G * g.G - g.G).cwiseAbs().maxCoeff() < 1e-8 * scale);
            CHECK(g.G.trace() == Approx(double(S.size())).margin(1e-8));
            Mat GQ = g.G * Q;
            CHECK((GQ - GQ.transpose()).cwiseAbs().maxCoeff() < 1e-8 * scale);
        }
    }
}

TEST_CASE("narrow and full projections are exact") {
    Rng rng(7);
    Mat Q = random_spd(3, rng);
    Vec omega = random_vec(3, rng);
    LimitExperiment exp(0.3, omega, Q);
    SubmodelGeometry gn = geometry(exp, SubmodelMask::narrow(3));
    CHECK(gn.G.cwiseAbs().maxCoeff() == 0.0);
    CHECK(gn.tauS2 == Approx(0.09).margin(1e-12));
    CHECK(gn.sigmaS2 == Approx(omega.dot(Q * omega)).margin(1e-10));
    SubmodelGeometry gf = geometry(exp, SubmodelMask::full(3));
    CHECK((gf.G - Mat::Identity(3, 3)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(gf.sigmaS2 == 0.0);
    CHECK(gf.tauS2 == Approx(0.09 + omega.dot(Q * omega)).margin(1e-10));
}

TEST_CASE("variance split: tauS2 + sigmaS2 equals the full-model mse") {
    Rng rng(99);
    for (int trial = 0; trial < 200; ++trial) {
        int q = 1 + int(rng.next_u64() % 5);
        Mat Q = random_spd(q, rng);
        Vec omega = random_vec(q, rng);
        double tau0 = rng.uniform();
        LimitExperiment exp(tau0, omega, Q);
        double mse_wide = tau0 * tau0 + omega.dot(Q * omega);
        for (const auto& S : all_masks(q)) {
            SubmodelGeometry g = geometry(exp, S);
            CHECK(g.tauS2 + g.sigmaS2 ==
                  Approx(mse_wide).margin(1e-8 * std::max(1.0, mse_wide)));
        }
    }
}

TEST_CASE("geometry rejects mask arity mismatch") {
    LimitExperiment exp(0.0, Vec::Ones(2), Mat::Identity(2, 2));
    CHECK_THROWS_AS(geometry(exp, SubmodelMask::narrow(3)), std::invalid_argument);
}

TEST_CASE("Monte Carlo mse of the submodel estimator matches the formula") {
    Rng meta(2024);
    for (int trial = 0; trial < 5; ++trial) {
        int q = 2 + int(meta.next_u64() % 3);
        Mat Q = random_spd(q, meta);
        Vec omega = random_vec(q, meta);
        Vec delta = 2.0 * random_vec(q, meta);
        double tau0 = 0.5 * meta.uniform();
        LimitExperiment exp(tau0, omega, Q);
        std::uint32_t bits = static_cast<std::uint32_t>(meta.next_u64() & ((1u << q) - 1));
        SubmodelMask S(bits, q);
        SubmodelGeometry g = geometry(exp, S);

        const std::size_t n = 100000;
        Rng rng(303 + trial);
        double s2 = 0.0, s4 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            LimitDraw d = sample_limit(exp, delta, rng);
            double lam = d.Lambda0 + omega.dot(delta - g.G * d.D);
            s2 += lam * lam;
            s4 += lam * lam * lam * lam;
        }
        double mc = s2 / double(n);
        double se = std::sqrt(std::max(s4 / double(n) - mc * mc, 0.0) / double(n));
        CHECK(std::fabs(mc - true_mse(exp, S, delta)) < 4.0 * se);
    }
}

TEST_CASE("true_mse at delta = 0 reduces to tauS2") {
    Rng rng(5);
    Mat Q = random_spd(3, rng);
    Vec omega = random_vec(3, rng);
    LimitExperiment exp(0.4, omega, Q);
    for (const auto& S : all_masks(3)) {
        SubmodelGeometry g = geometry(exp, S);
        CHECK(true_mse(exp, S, Vec::Zero(3)) == Approx(g.tauS2).margin(1e-12));
    }
}
