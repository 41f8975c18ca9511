#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "ficlab/cdfic.hpp"

using namespace ficlab;
using Catch::Approx;

namespace {

LimitExperiment toy_experiment() {
    Vec omega(3);
    omega << 1.0, -0.5, 0.8;
    Mat Q(3, 3);
    Q << 2.0, 0.3, -0.2,
         0.3, 1.5, 0.4,
        -0.2, 0.4, 1.8;
    return LimitExperiment(0.4, omega, Q);
}

} // namespace

TEST_CASE("cd starts at its pointmass and increases to one") {
    LimitExperiment exp = toy_experiment();
    Vec D(3);
    D << 1.2, -0.7, 0.9;
    exp.D = D;
    RmseCD cd = make_cd(exp, SubmodelMask(0b011, 3));
    REQUIRE_FALSE(cd.is_wide);
    CHECK(cd_eval(cd, cd.tauS2 - 1e-9) == 0.0);
    CHECK(cd_eval(cd, cd.tauS2) == Approx(cd.pointmass()).margin(1e-12));
    double prev = 0.0;
    for (double mse = cd.tauS2; mse < cd.tauS2 + 40.0 * cd.sigmaS2; mse += 0.05) {
        double c = cd_eval(cd, mse);
        CHECK(c >= prev - 1e-12);
        prev = c;
    }
    CHECK(prev > 0.999);
}

TEST_CASE("cd quantile round-trips and collapses onto the pointmass") {
    LimitExperiment exp = toy_experiment();
    Vec D(3);
    D << 2.0, 0.5, -1.5;
    exp.D = D;
    for (const auto& S : all_masks(3)) {
        RmseCD cd = make_cd(exp, S);
        for (double q : {0.05, 0.25, 0.5, 0.75, 0.95}) {
            double m = cd_quantile(cd, q);
            if (cd.is_wide || cd.pointmass() >= q) {
                CHECK(m == Approx(cd.tauS2).margin(1e-12));
            } else {
                CHECK(cd_eval(cd, m) == Approx(q).margin(1e-7));
            }
            CHECK(cd_quantile_rho(cd, q) == Approx(std::sqrt(m / cd.n)).margin(1e-12));
        }
    }
    RmseCD cd = make_cd(exp, SubmodelMask(0b001, 3));
    CHECK_THROWS_AS(cd_quantile(cd, 0.0), std::domain_error);
    CHECK_THROWS_AS(cd_quantile(cd, 1.0), std::domain_error);
}

TEST_CASE("wide model cd is a unit step at its minimum") {
    LimitExperiment exp = toy_experiment();
    Vec D(3);
    D << 0.1, 0.2, 0.3;
    exp.D = D;
    RmseCD cd = make_cd(exp, SubmodelMask::full(3));
    CHECK(cd.is_wide);
    CHECK(cd.pointmass() == 1.0);
    CHECK(cd_eval(cd, cd.tauS2 - 1e-9) == 0.0);
    CHECK(cd_eval(cd, cd.tauS2) == 1.0);
    for (double q : {0.01, 0.5, 0.99}) CHECK(cd_quantile(cd, q) == cd.tauS2);
    auto [lo, hi] = cd_interval(cd, 0.8);
    CHECK(lo == Approx(std::sqrt(cd.tauS2)).margin(1e-12));
    CHECK(hi == Approx(std::sqrt(cd.tauS2)).margin(1e-12));
}

TEST_CASE("interval endpoints are cd quantiles on the rmse scale") {
    LimitExperiment exp = toy_experiment();
    Vec D(3);
    D << 1.5, -2.0, 0.7;
    exp.D = D;
    RmseCD cd = make_cd(exp, SubmodelMask(0b010, 3), 50.0);
    auto [lo, hi] = cd_interval(cd, 0.8);
    CHECK(lo == Approx(cd_quantile_rho(cd, 0.1)).margin(1e-12));
    CHECK(hi == Approx(cd_quantile_rho(cd, 0.9)).margin(1e-12));
    CHECK(lo <= hi);
    CHECK_THROWS_AS(cd_interval(cd, 0.0), std::domain_error);

    // tiny b_obs: the pointmass swallows the lower tail
    RmseCD flat = cd;
    flat.b_obs = 1e-6;
    REQUIRE(flat.pointmass() > 0.99);
    auto [lo2, hi2] = cd_interval(flat, 0.8);
    CHECK(lo2 == Approx(flat.min_rho()).margin(1e-12));
    CHECK(hi2 >= lo2);
}

TEST_CASE("cd of the true mse is exactly uniform over replicates") {
    LimitExperiment exp = toy_experiment();
    Vec delta(3);
    delta << 1.0, -0.6, 0.8;
    SubmodelMask S(0b101, 3);
    SubmodelGeometry g = geometry(exp, S);
    const double mse_true = true_mse(exp, S, delta);

    const int n = 10000;
    std::vector<double> u;
    u.reserve(n);
    Rng rng(7777);
    Eigen::LLT<Mat> llt(exp.Q);
    Mat L = llt.matrixL();
    Vec z(3);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < 3; ++j) z[j] = rng.normal();
        Vec D = delta + L * z;
        RmseCD cd = make_cd(g, exp.omega, D);
        u.push_back(cd_eval(cd, mse_true));
    }
    std::sort(u.begin(), u.end());
    double ks = 0.0;
    for (int i = 0; i < n; ++i) {
        ks = std::max(ks, std::fabs(u[i] - double(i + 1) / n));
        ks = std::max(ks, std::fabs(u[i] - double(i) / n));
    }
    CHECK(ks < 0.02);
}

TEST_CASE("cd curve spans pointmass to 0.999 and is monotone") {
    LimitExperiment exp = toy_experiment();
    Vec D(3);
    D << 2.5, 0.0, -1.0;
    exp.D = D;
    RmseCD cd = make_cd(exp, SubmodelMask(0b100, 3), 100.0);
    CdCurve curve = cd_curve(cd, 256);
    REQUIRE(curve.rho.size() == 256);
    CHECK(curve.min_rho == Approx(cd.min_rho()).margin(1e-12));
    CHECK(curve.rho.front() == Approx(curve.min_rho).margin(1e-12));
    CHECK(curve.confidence.front() == Approx(cd.pointmass()).margin(1e-9));
    CHECK(curve.confidence.back() == Approx(0.999).margin(1e-6));
    for (std::size_t i = 1; i < curve.rho.size(); ++i) {
        CHECK(curve.rho[i] >= curve.rho[i - 1]);
        CHECK(curve.confidence[i] >= curve.confidence[i - 1] - 1e-12);
    }
}

TEST_CASE("median score sits between the quartile scores") {
    LimitExperiment exp = toy_experiment();
    Vec D(3);
    D << 1.7, -1.1, 0.4;
    exp.D = D;
    for (const auto& S : all_masks(3)) {
        RmseCD cd = make_cd(exp, S);
        double lo = cd_quantile(cd, 0.25);
        double mid = median_fic(cd);
        double hi = cd_quantile(cd, 0.75);
        CHECK(lo <= mid + 1e-12);
        CHECK(mid <= hi + 1e-12);
        CHECK(median_fic_rho(cd) == Approx(std::sqrt(mid / cd.n)).margin(1e-12));
    }
}

TEST_CASE("mse difference interval brackets the point value") {
    LimitExperiment exp = toy_experiment();
    Vec D(3);
    D << 1.0, 0.5, -0.5;
    exp.D = D;
    SubmodelMask S(0b001, 3), T = SubmodelMask::full(3);
    auto [lo, hi] = mse_diff_interval(exp, S, T, 0.9, 5000, 31);
    REQUIRE(lo <= hi);
    SubmodelGeometry gS = geometry(exp, S), gT = geometry(exp, T);
    Vec wS = exp.omega - gS.G.transpose() * exp.omega;
    double bS = wS.dot(D);
    double at_D = gT.tauS2 - gS.tauS2 - bS * bS;
    CHECK(lo <= at_D + 1e-12);
    CHECK(hi >= at_D - 1e-12);

    // identical models give a degenerate zero interval
    auto [zlo, zhi] = mse_diff_interval(exp, S, S, 0.9, 1000, 31);
    CHECK(zlo == Approx(0.0).margin(1e-12));
    CHECK(zhi == Approx(0.0).margin(1e-12));
}

TEST_CASE("make_cd without an observed D is rejected") {
    LimitExperiment exp = toy_experiment();
    CHECK_THROWS_AS(make_cd(exp, SubmodelMask::narrow(3)), std::invalid_argument);
}
