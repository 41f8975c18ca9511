#pragma once

// Confidence distributions for the mse (and rmse) of a candidate model's
// focus estimator.  With b_obs = {omega'(I-G_S)D}^2 / sigma_S^2 the CD is
//     C_S(mse) = 1 - Gamma1(b_obs, (mse - tau_S^2)/sigma_S^2),  mse >= tau_S^2,
// a nondecreasing curve starting with a pointmass 1 - Gamma1(b_obs) at the
// minimum tau_S^2.  For the wide model sigma_S = 0 and the CD degenerates
// to a unit pointmass.  On the data scale the same curve is read in
// rho = rmse/sqrt(n) units through mse = n rho^2.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ficlab/limitcore.hpp"
#include "ficlab/special.hpp"

namespace ficlab {

struct RmseCD {
    double tauS2 = 0.0;
    double sigmaS2 = 0.0;
    double b_obs = 0.0;
    double n = 1.0;          // 1 for the pure limit experiment
    bool is_wide = false;    // sigma_S = 0 case

    double pointmass() const {
        if (is_wide) return 1.0;
        return 1.0 - chi2_1_cdf(b_obs);
    }
    double min_mse() const { return tauS2; }
    double min_rho() const { return std::sqrt(tauS2 / n); }
};

inline RmseCD make_cd(const SubmodelGeometry& g, const Vec& omega, const Vec& D,
                      double n = 1.0) {
    RmseCD cd;
    cd.tauS2 = g.tauS2;
    cd.sigmaS2 = g.sigmaS2;
    cd.n = n;
    if (g.sigmaS2 <= 0.0) {
        cd.is_wide = true;
        cd.b_obs = 0.0;
    } else {
        Vec IGw = omega - g.G.transpose() * omega;
        double raw = IGw.dot(D);
        cd.b_obs = raw * raw / g.sigmaS2;
    }
    return cd;
}

inline RmseCD make_cd(const LimitExperiment& exp, const SubmodelMask& S, double n = 1.0) {
    if (!exp.D) throw std::invalid_argument("make_cd: experiment carries no D");
    return make_cd(geometry(exp, S), exp.omega, *exp.D, n);
}

inline double cd_eval(const RmseCD& cd, double mse) {
    if (cd.is_wide) return mse >= cd.tauS2 ? 1.0 : 0.0;
    if (mse < cd.tauS2) return 0.0;
    return 1.0 - nc_chi2_1_cdf(cd.b_obs, (mse - cd.tauS2) / cd.sigmaS2);
}

inline double cd_eval_rho(const RmseCD& cd, double rho) {
    return cd_eval(cd, cd.n * rho * rho);
}

// Smallest mse with C_S(mse) >= q.  Equals tau_S^2 while the pointmass
// covers q; otherwise inverts the noncentrality coordinate.
inline double cd_quantile(const RmseCD& cd, double q) {
    if (!(q > 0.0 && q < 1.0)) throw std::domain_error("cd_quantile: q outside (0,1)");
    if (cd.is_wide) return cd.tauS2;
    if (cd.b_obs <= 0.0) return cd.tauS2; // CD starts at 1
    if (cd.pointmass() >= q) return cd.tauS2;
    double lam = invert_noncentrality(cd.b_obs, 1.0 - q);
    return cd.tauS2 + cd.sigmaS2 * lam;
}

inline double cd_quantile_rho(const RmseCD& cd, double q) {
    return std::sqrt(cd_quantile(cd, q) / cd.n);
}

inline double median_fic(const RmseCD& cd) { return cd_quantile(cd, 0.5); }
inline double median_fic_rho(const RmseCD& cd) { return cd_quantile_rho(cd, 0.5); }

// Equal-tailed interval on the rmse scale; the lower endpoint collapses
// onto the pointmass minimum whenever the pointmass exceeds the lower tail.
inline std::pair<double, double> cd_interval(const RmseCD& cd, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::domain_error("cd_interval: alpha outside (0,1)");
    double tail = 0.5 * (1.0 - alpha);
    double lo = cd_quantile_rho(cd, tail);
    double hi = cd_quantile_rho(cd, 1.0 - tail);
    return {lo, hi};
}

struct CdCurve {
    std::vector<double> rho;
    std::vector<double> confidence;
    double pointmass = 0.0;
    double min_rho = 0.0;
};

// 512-point curve from the minimum to the 0.999 quantile, rmse scale.
inline CdCurve cd_curve(const RmseCD& cd, int points = 512) {
    CdCurve out;
    out.pointmass = cd.pointmass();
    out.min_rho = cd.min_rho();
    double hi = cd_quantile_rho(cd, 0.999);
    if (hi <= out.min_rho) hi = out.min_rho * (1.0 + 1e-6) + 1e-12;
    out.rho.reserve(points);
    out.confidence.reserve(points);
    for (int i = 0; i < points; ++i) {
        double r = out.min_rho + (hi - out.min_rho) * double(i) / double(points - 1);
        out.rho.push_back(r);
        out.confidence.push_back(cd_eval_rho(cd, r));
    }
    return out;
}

// Confidence interval for mse_T - mse_S from the confidence ellipsoid
//     E_alpha = { delta : (delta - D)' Q^{-1} (delta - D) <= chi2_q(alpha) }.
// The attained range of d(delta) over E_alpha gives a conservative
// interval.  Sampling is uniform on the solid ellipsoid via whitening;
// the 2q axis extremes and D itself are appended deterministically so a
// finite sample cannot miss the principal directions.
inline std::pair<double, double> mse_diff_interval(const LimitExperiment& exp,
                                                   const SubmodelMask& S,
                                                   const SubmodelMask& T,
                                                   double alpha,
                                                   std::size_t m_samples,
                                                   std::uint64_t seed) {
    if (!exp.D) throw std::invalid_argument("mse_diff_interval: experiment carries no D");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::domain_error("mse_diff_interval: alpha outside (0,1)");
    const int q = exp.q;
    const Vec& D = *exp.D;
    SubmodelGeometry gS = geometry(exp, S), gT = geometry(exp, T);
    Vec wS = exp.omega - gS.G.transpose() * exp.omega;
    Vec wT = exp.omega - gT.G.transpose() * exp.omega;
    const double base = gT.tauS2 - gS.tauS2;
    auto dvalue = [&](const Vec& delta) {
        double bT = wT.dot(delta), bS = wS.dot(delta);
        return base + bT * bT - bS * bS;
    };
    double radius = std::sqrt(chi2_quantile(alpha, double(q)));
    Eigen::LLT<Mat> llt(exp.Q);
    Mat L = llt.matrixL();
    double lo = dvalue(D), hi = lo;
    auto take = [&](const Vec& delta) {
        double v = dvalue(delta);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    };
    for (int j = 0; j < q; ++j) {
        Vec axis = radius * L.col(j);
        take(D + axis);
        take(D - axis);
    }
    Rng rng(seed, 0x6d5eULL);
    Vec z(q);
    for (std::size_t i = 0; i < m_samples; ++i) {
        for (int j = 0; j < q; ++j) z[j] = rng.normal();
        double nrm = z.norm();
        if (nrm <= 0.0) continue;
        double r = radius * std::pow(rng.uniform(), 1.0 / double(q));
        take(D + (r / nrm) * (L * z));
    }
    return {lo, hi};
}

} // namespace ficlab
