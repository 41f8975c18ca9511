#pragma once

// Distribution functions needed by the scoring and confidence machinery.
//
// The one-degree-of-freedom noncentral chi-squared CDF is computed through
// the exact identity
//     Gamma1(x, eta^2) = Phi(sqrt(x) - eta) - Phi(-sqrt(x) - eta),
// which is branch-free and accurate in both tails, so no series expansion
// is needed for this special case.

#include <cmath>
#include <limits>
#include <stdexcept>

namespace ficlab {

inline constexpr double kChi1Median = 0.45493642311957174; // median of chi2_1

inline double normal_cdf(double x) {
    return 0.5 * std::erfc(-x * 0.70710678118654752440);
}

inline double normal_pdf(double x) {
    return 0.39894228040143267794 * std::exp(-0.5 * x * x);
}

// Acklam's rational approximation refined by one Halley step.
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw std::domain_error("normal_quantile: p outside (0,1)");
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425, phigh = 1.0 - plow;
    double x;
    if (p < plow) {
        double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= phigh) {
        double q = p - 0.5, r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    double e = normal_cdf(x) - p;
    double u = e * std::sqrt(2.0 * 3.14159265358979323846) * std::exp(0.5 * x * x);
    return x - u / (1.0 + 0.5 * x * u);
}

// CDF of the noncentral chi-squared with 1 df and noncentrality ncp.
inline double nc_chi2_1_cdf(double x, double ncp) {
    if (x <= 0.0) return 0.0;
    double eta = std::sqrt(ncp < 0.0 ? 0.0 : ncp);
    double s = std::sqrt(x);
    return normal_cdf(s - eta) - normal_cdf(-s - eta);
}

inline double chi2_1_cdf(double x) { return nc_chi2_1_cdf(x, 0.0); }

// quantile of the central chi2_1: Gamma1(x,0) = 2 Phi(sqrt x) - 1
inline double chi2_1_quantile(double p) {
    double z = normal_quantile(0.5 * (1.0 + p));
    return z * z;
}

// Solves Gamma1(x, lam) = p for the noncentrality lam >= 0 at fixed x > 0.
// The CDF is strictly decreasing in lam; bisection on [0, (sqrt x + 10)^2]
// (ten sigma beyond the observation, where the CDF is far below any
// attainable p of interest).
inline double invert_noncentrality(double x, double p) {
    if (x <= 0.0) throw std::domain_error("invert_noncentrality: x must be > 0");
    if (!(p > 0.0 && p < 1.0))
        throw std::domain_error("invert_noncentrality: p outside (0,1)");
    double p0 = chi2_1_cdf(x);
    if (p >= p0) return 0.0; // already at or below the lam=0 value
    // solve in eta = sqrt(lam) on the bracket [0, sqrt(x)+10]; Newton steps
    // with bisection whenever a step would leave the bracket (the derivative
    // vanishes at eta = 0)
    const double rx = std::sqrt(x);
    double lo = 0.0, hi = rx + 10.0;
    double eta = rx - normal_quantile(p); // one-normal-term approximation
    if (!(eta > lo && eta < hi)) eta = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        double f = normal_cdf(rx - eta) - normal_cdf(-rx - eta) - p;
        if (f > 0.0)
            lo = eta;
        else
            hi = eta;
        if (hi - lo <= 1e-11 * (1.0 + hi)) return 0.25 * (lo + hi) * (lo + hi);
        double fp = normal_pdf(rx + eta) - normal_pdf(rx - eta); // f' <= 0
        double next = fp < -1e-300 ? eta - f / fp : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::fabs(next - eta) <= 1e-12 * (1.0 + next)) return next * next;
        eta = next;
    }
    return 0.25 * (lo + hi) * (lo + hi);
}

// Solves Gamma1(x, ncp) = p for x >= 0 at fixed noncentrality.
inline double nc_chi2_1_quantile(double p, double ncp) {
    if (!(p > 0.0 && p < 1.0))
        throw std::domain_error("nc_chi2_1_quantile: p outside (0,1)");
    double lo = 0.0, hi = 1.0;
    while (nc_chi2_1_cdf(hi, ncp) < p) hi *= 2.0;
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        if (nc_chi2_1_cdf(mid, ncp) < p)
            lo = mid;
        else
            hi = mid;
        if (hi - lo <= 1e-12 * (1.0 + hi)) break;
    }
    return 0.5 * (lo + hi);
}

// Regularized lower incomplete gamma P(a,x); series for x < a+1,
// continued fraction otherwise (Numerical Recipes style).
inline double gamma_p(double a, double x) {
    if (x < 0.0 || a <= 0.0) throw std::domain_error("gamma_p: bad arguments");
    if (x == 0.0) return 0.0;
    double gln = std::lgamma(a);
    if (x < a + 1.0) {
        double ap = a, sum = 1.0 / a, del = sum;
        for (int n = 0; n < 500; ++n) {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if (std::fabs(del) < std::fabs(sum) * 1e-16) break;
        }
        return sum * std::exp(-x + a * std::log(x) - gln);
    }
    double b = x + 1.0 - a, c = 1e308, d = 1.0 / b, h = d;
    for (int i = 1; i <= 500; ++i) {
        double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < 1e-300) d = 1e-300;
        c = b + an / c;
        if (std::fabs(c) < 1e-300) c = 1e-300;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-16) break;
    }
    return 1.0 - std::exp(-x + a * std::log(x) - gln) * h;
}

inline double chi2_cdf(double x, double df) {
    if (x <= 0.0) return 0.0;
    return gamma_p(0.5 * df, 0.5 * x);
}

inline double chi2_quantile(double p, double df) {
    if (!(p > 0.0 && p < 1.0))
        throw std::domain_error("chi2_quantile: p outside (0,1)");
    double lo = 0.0, hi = df + 10.0;
    while (chi2_cdf(hi, df) < p) hi *= 2.0;
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        if (chi2_cdf(mid, df) < p)
            lo = mid;
        else
            hi = mid;
        if (hi - lo <= 1e-12 * (1.0 + hi)) break;
    }
    return 0.5 * (lo + hi);
}

} // namespace ficlab
