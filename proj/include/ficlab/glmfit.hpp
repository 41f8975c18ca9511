#pragma once

// Maximum-likelihood fitting for linear, logistic and Poisson regression,
// plus the background quantities the scoring machinery needs: normalized
// expected information J at the wide fit, Q = (J^11)^-1 block, the focus
// gradient pair (d mu / d theta, d mu / d gamma), omega, tau0 and
// D_n = sqrt(n) (gamma_wide_hat - gamma0).
//
// Candidate models keep all protected columns and a subset S of the open
// columns; excluded open coefficients are pinned at gamma0 (zero by
// default) and enter the fit through an offset.
//
// For the linear family the residual variance is itself a protected
// nuisance parameter: it is appended to theta for all information
// computations (its per-observation information is 1/(2 sigma^4), with no
// cross terms at the ML point).

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ficlab/cdfic.hpp"
#include "ficlab/ficscores.hpp"
#include "ficlab/limitcore.hpp"
#include "ficlab/special.hpp"

namespace ficlab {

enum class Family { linear, logistic, poisson };

inline const char* family_name(Family f) {
    switch (f) {
        case Family::linear: return "linear";
        case Family::logistic: return "logistic";
        default: return "poisson";
    }
}

struct FitError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GlmDataset {
    Family family = Family::linear;
    Vec y;
    Mat X; // n x p protected design (intercept column included by the caller)
    Mat Z; // n x q open design
    Vec gamma0; // null values for the open coefficients

    int n() const { return static_cast<int>(y.size()); }
    int p() const { return static_cast<int>(X.cols()); }
    int q() const { return static_cast<int>(Z.cols()); }

    void validate() const {
        if (X.rows() != n() || Z.rows() != n())
            throw std::invalid_argument("GlmDataset: design row mismatch");
        if (n() <= p() + q())
            throw std::invalid_argument("GlmDataset: need n > p + q");
        if (gamma0.size() != q())
            throw std::invalid_argument("GlmDataset: gamma0 length mismatch");
        if (family == Family::logistic)
            for (int i = 0; i < n(); ++i)
                if (y[i] != 0.0 && y[i] != 1.0)
                    throw std::invalid_argument("GlmDataset: logistic response must be 0/1");
        if (family == Family::poisson)
            for (int i = 0; i < n(); ++i)
                if (y[i] < 0.0 || y[i] != std::floor(y[i]))
                    throw std::invalid_argument("GlmDataset: poisson response must be counts");
    }

    static Vec zero_gamma0(int q) { return Vec::Zero(q); }
};

enum class FocusKind { linear_predictor, mean_response, prob_below };

struct FocusSpec {
    FocusKind kind = FocusKind::mean_response;
    Vec x0; // length p
    Vec z0; // length q
    double y0 = 0.0; // threshold for prob_below
    // optional user focus mu(theta, gamma); theta includes sigma^2 as its
    // last entry for the linear family
    std::function<double(const Vec&, const Vec&)> custom;
};

namespace detail {

struct MlFit {
    Vec coef;
    double sigma2 = 0.0; // linear only
    double loglik = 0.0;
    int iterations = 0;
};

inline double loglik_at(Family fam, const Vec& y, const Vec& eta, double sigma2) {
    const int n = static_cast<int>(y.size());
    double ll = 0.0;
    switch (fam) {
        case Family::linear: {
            double rss = 0.0;
            for (int i = 0; i < n; ++i) rss += (y[i] - eta[i]) * (y[i] - eta[i]);
            ll = -0.5 * n * (std::log(2.0 * M_PI * sigma2) + rss / (n * sigma2));
            break;
        }
        case Family::logistic:
            for (int i = 0; i < n; ++i)
                ll += y[i] * eta[i] - std::log1p(std::exp(eta[i]));
            break;
        case Family::poisson:
            for (int i = 0; i < n; ++i)
                ll += y[i] * eta[i] - std::exp(eta[i]) - std::lgamma(y[i] + 1.0);
            break;
    }
    return ll;
}

// Newton with step halving; gradient norm below 1e-9 declares convergence.
// A separated logistic fit (or an all-zero poisson response) also drives
// the gradient to zero, with every observation saturated; that case is
// rejected by requiring at least one non-vanishing curvature weight.
inline MlFit fit_ml(Family fam, const Vec& y, const Mat& U, const Vec& offset) {
    const int n = static_cast<int>(y.size());
    const int k = static_cast<int>(U.cols());
    MlFit fit;
    if (fam == Family::linear) {
        Eigen::ColPivHouseholderQR<Mat> qr(U);
        if (qr.rank() < k) throw FitError("linear fit: design is rank deficient");
        fit.coef = qr.solve(y - offset);
        Vec eta = U * fit.coef + offset;
        double rss = (y - eta).squaredNorm();
        fit.sigma2 = rss / n;
        if (fit.sigma2 <= 0.0) throw FitError("linear fit: zero residual variance");
        fit.loglik = loglik_at(fam, y, eta, fit.sigma2);
        return fit;
    }
    Vec coef = Vec::Zero(k);
    double ll = loglik_at(fam, y, offset, 0.0);
    for (int it = 1; it <= 100; ++it) {
        fit.iterations = it;
        Vec eta = U * coef + offset;
        Vec mu(n), w(n);
        if (fam == Family::logistic) {
            for (int i = 0; i < n; ++i) {
                double p = 1.0 / (1.0 + std::exp(-eta[i]));
                mu[i] = p;
                w[i] = p * (1.0 - p);
            }
        } else {
            for (int i = 0; i < n; ++i) {
                double lam = std::exp(eta[i]);
                mu[i] = lam;
                w[i] = lam;
            }
        }
        Vec grad = U.transpose() * (y - mu);
        double gnorm = grad.norm();
        if (gnorm < 1e-9) {
            if (w.maxCoeff() < 1e-8)
                throw FitError(fam == Family::logistic
                                   ? "logistic fit: separation (all probabilities saturated)"
                                   : "poisson fit: degenerate response (all means near zero)");
            fit.coef = coef;
            fit.loglik = ll;
            return fit;
        }
        Mat H = U.transpose() * w.asDiagonal() * U;
        Eigen::LDLT<Mat> ldlt(H);
        if (ldlt.info() != Eigen::Success)
            throw FitError("fit: singular information matrix");
        Vec step = ldlt.solve(grad);
        double t = 1.0;
        for (int half = 0; half < 40; ++half) {
            Vec cand = coef + t * step;
            double cll = loglik_at(fam, y, U * cand + offset, 0.0);
            if (std::isfinite(cll) && cll >= ll - 1e-12) {
                coef = cand;
                ll = cll;
                break;
            }
            t *= 0.5;
        }
        if (coef.lpNorm<Eigen::Infinity>() > 1e4)
            throw FitError(fam == Family::logistic
                               ? "logistic fit: separation (coefficients diverging)"
                               : "fit: coefficients diverging");
    }
    throw FitError("fit: no convergence after 100 iterations");
}

} // namespace detail

struct WideBackground {
    Vec theta_hat;  // protected coefficients, sigma^2 appended for linear
    Vec gamma_hat;  // open coefficients
    Mat Jhat;       // normalized expected information, (p_eff + q)^2
    Mat Qhat;       // q x q
    Vec omega_hat;  // length q
    double tau0_hat = 0.0;
    Vec Dn;         // sqrt(n) (gamma_hat - gamma0)
    double loglik = 0.0;
    int n = 0;
    int p_eff = 0;  // p, or p+1 for linear (sigma^2 slot)
};

struct SubmodelFit {
    SubmodelMask S;
    Vec theta;      // protected coefficients (sigma^2 appended for linear)
    Vec gamma;      // full length q, excluded entries pinned at gamma0
    double mu_hat = 0.0;
    double loglik = 0.0;
    bool ok = true;
    std::string error;
};

// Focus value at given parameters; theta carries sigma^2 last for linear.
inline double focus_value(const FocusSpec& spec, Family fam, const Vec& theta,
                          const Vec& gamma) {
    if (spec.custom) return spec.custom(theta, gamma);
    const int p = static_cast<int>(spec.x0.size());
    double eta = spec.x0.dot(theta.head(p)) + spec.z0.dot(gamma);
    switch (spec.kind) {
        case FocusKind::linear_predictor:
            return eta;
        case FocusKind::mean_response:
            if (fam == Family::logistic) return 1.0 / (1.0 + std::exp(-eta));
            if (fam == Family::poisson) return std::exp(eta);
            return eta;
        case FocusKind::prob_below: {
            if (fam == Family::linear) {
                double sigma2 = theta[theta.size() - 1];
                return normal_cdf((spec.y0 - eta) / std::sqrt(sigma2));
            }
            if (fam == Family::poisson) {
                double lam = std::exp(eta);
                double k = std::floor(spec.y0);
                if (k < 0.0) return 0.0;
                return 1.0 - gamma_p(k + 1.0, lam); // P(Y <= k)
            }
            throw std::invalid_argument("prob_below focus is not defined for logistic");
        }
    }
    return eta;
}

// Gradient of the focus with respect to (theta, gamma) at the wide fit.
inline std::pair<Vec, Vec> focus_derivatives(const FocusSpec& spec, Family fam,
                                             const Vec& theta, const Vec& gamma) {
    const int p_eff = static_cast<int>(theta.size());
    const int q = static_cast<int>(gamma.size());
    if (spec.custom) {
        // central differences, step scaled per coordinate
        Vec dth(p_eff), dga(q);
        Vec th = theta, ga = gamma;
        for (int j = 0; j < p_eff; ++j) {
            double h = 1e-6 * (1.0 + std::fabs(th[j]));
            double keep = th[j];
            th[j] = keep + h;
            double up = spec.custom(th, ga);
            th[j] = keep - h;
            double dn = spec.custom(th, ga);
            th[j] = keep;
            dth[j] = (up - dn) / (2.0 * h);
        }
        for (int j = 0; j < q; ++j) {
            double h = 1e-6 * (1.0 + std::fabs(ga[j]));
            double keep = ga[j];
            ga[j] = keep + h;
            double up = spec.custom(th, ga);
            ga[j] = keep - h;
            double dn = spec.custom(th, ga);
            ga[j] = keep;
            dga[j] = (up - dn) / (2.0 * h);
        }
        for (int j = 0; j < p_eff; ++j)
            if (!std::isfinite(dth[j])) throw FitError("focus gradient not finite");
        for (int j = 0; j < q; ++j)
            if (!std::isfinite(dga[j])) throw FitError("focus gradient not finite");
        return {dth, dga};
    }
    const int p = static_cast<int>(spec.x0.size());
    double eta = spec.x0.dot(theta.head(p)) + spec.z0.dot(gamma);
    Vec dth = Vec::Zero(p_eff), dga = Vec::Zero(q);
    double scale = 1.0;
    switch (spec.kind) {
        case FocusKind::linear_predictor:
            scale = 1.0;
            break;
        case FocusKind::mean_response:
            if (fam == Family::logistic) {
                double pr = 1.0 / (1.0 + std::exp(-eta));
                scale = pr * (1.0 - pr);
            } else if (fam == Family::poisson) {
                scale = std::exp(eta);
            }
            break;
        case FocusKind::prob_below: {
            if (fam == Family::linear) {
                double sigma2 = theta[p_eff - 1];
                double sigma = std::sqrt(sigma2);
                double u = (spec.y0 - eta) / sigma;
                scale = -normal_pdf(u) / sigma;
                // d/d sigma^2 of Phi((y0-eta)/sigma)
                dth[p_eff - 1] = normal_pdf(u) * (-(spec.y0 - eta) / (2.0 * sigma2 * sigma));
            } else if (fam == Family::poisson) {
                double lam = std::exp(eta);
                double k = std::floor(spec.y0);
                double log_pmf = -lam + k * std::log(lam) - std::lgamma(k + 1.0);
                scale = -std::exp(log_pmf) * lam; // dP/dlam * dlam/deta
            } else {
                throw std::invalid_argument("prob_below focus is not defined for logistic");
            }
            break;
        }
    }
    dth.head(p) += scale * spec.x0;
    dga = scale * spec.z0;
    return {dth, dga};
}

inline WideBackground fit_wide(const GlmDataset& data) {
    data.validate();
    const int n = data.n(), p = data.p(), q = data.q();
    Mat U(n, p + q);
    U << data.X, data.Z;
    detail::MlFit fit = detail::fit_ml(data.family, data.y, U, Vec::Zero(n));
    WideBackground bg;
    bg.n = n;
    bg.loglik = fit.loglik;
    bg.gamma_hat = fit.coef.tail(q);
    bg.Dn = std::sqrt(double(n)) * (bg.gamma_hat - data.gamma0);

    // expected information: weighted cross products, normalized by n
    Vec eta = U * fit.coef;
    Vec w(n);
    if (data.family == Family::linear) {
        w.setConstant(1.0 / fit.sigma2);
    } else if (data.family == Family::logistic) {
        for (int i = 0; i < n; ++i) {
            double pr = 1.0 / (1.0 + std::exp(-eta[i]));
            w[i] = pr * (1.0 - pr);
        }
    } else {
        for (int i = 0; i < n; ++i) w[i] = std::exp(eta[i]);
    }
    Mat A = U.transpose() * w.asDiagonal() * U / double(n);

    if (data.family == Family::linear) {
        bg.p_eff = p + 1;
        bg.theta_hat = Vec(p + 1);
        bg.theta_hat.head(p) = fit.coef.head(p);
        bg.theta_hat[p] = fit.sigma2;
        const int m = p + 1 + q;
        bg.Jhat = Mat::Zero(m, m);
        bg.Jhat.topLeftCorner(p, p) = A.topLeftCorner(p, p);
        bg.Jhat.topRightCorner(p, q) = A.topRightCorner(p, q);
        bg.Jhat.bottomLeftCorner(q, p) = A.bottomLeftCorner(q, p);
        bg.Jhat.bottomRightCorner(q, q) = A.bottomRightCorner(q, q);
        bg.Jhat(p, p) = 1.0 / (2.0 * fit.sigma2 * fit.sigma2);
    } else {
        bg.p_eff = p;
        bg.theta_hat = fit.coef.head(p);
        bg.Jhat = A;
    }

    const int pe = bg.p_eff;
    Mat J00 = bg.Jhat.topLeftCorner(pe, pe);
    Mat J01 = bg.Jhat.topRightCorner(pe, q);
    Mat J10 = bg.Jhat.bottomLeftCorner(q, pe);
    Mat J11 = bg.Jhat.bottomRightCorner(q, q);
    Eigen::LLT<Mat> llt00(J00);
    if (llt00.info() != Eigen::Success)
        throw FitError("fit_wide: protected information block not positive definite");
    Mat schur = J11 - J10 * llt00.solve(J01);
    bg.Qhat = spd_inverse(schur, "fit_wide(Q)");
    return bg;
}

// Completes the background with the focus-dependent pieces.
inline void attach_focus(WideBackground& bg, const FocusSpec& spec, Family fam) {
    auto [dth, dga] = focus_derivatives(spec, fam, bg.theta_hat, bg.gamma_hat);
    const int pe = bg.p_eff, q = static_cast<int>(bg.gamma_hat.size());
    Mat J00 = bg.Jhat.topLeftCorner(pe, pe);
    Eigen::LLT<Mat> llt00(J00);
    Vec J00inv_dth = llt00.solve(dth);
    bg.omega_hat = bg.Jhat.bottomLeftCorner(q, pe) * J00inv_dth - dga;
    bg.tau0_hat = std::sqrt(std::max(dth.dot(J00inv_dth), 0.0));
}

inline SubmodelFit fit_submodel(const GlmDataset& data, const FocusSpec& spec,
                                const SubmodelMask& S) {
    const int n = data.n(), p = data.p(), q = data.q();
    SubmodelFit out;
    out.S = S;
    const auto idx = S.indices();
    const int k = static_cast<int>(idx.size());
    Mat U(n, p + k);
    U.leftCols(p) = data.X;
    for (int a = 0; a < k; ++a) U.col(p + a) = data.Z.col(idx[a]);
    Vec offset = Vec::Zero(n);
    for (int j = 0; j < q; ++j)
        if (!S.contains(j) && data.gamma0[j] != 0.0)
            offset += data.gamma0[j] * data.Z.col(j);
    try {
        detail::MlFit fit = detail::fit_ml(data.family, data.y, U, offset);
        out.loglik = fit.loglik;
        out.gamma = data.gamma0;
        for (int a = 0; a < k; ++a) out.gamma[idx[a]] = fit.coef[p + a];
        if (data.family == Family::linear) {
            out.theta = Vec(p + 1);
            out.theta.head(p) = fit.coef.head(p);
            out.theta[p] = fit.sigma2;
        } else {
            out.theta = fit.coef.head(p);
        }
        out.mu_hat = focus_value(spec, data.family, out.theta, out.gamma);
    } catch (const std::exception& e) {
        out.ok = false;
        out.error = e.what();
    }
    return out;
}

struct AnalysisOptions {
    ScoreVariant rank_by = ScoreVariant::fic_t;
    double quantile_q = 0.5;
    double ci_level = 0.8;
};

struct AnalysisResult {
    WideBackground background;
    LimitExperiment exp; // estimated background as a limit experiment, D = Dn
    std::vector<SubmodelFit> fits;           // admissible masks, fit order
    std::vector<RmseCD> cds;                 // aligned with table records
    std::vector<std::pair<double, double>> intervals; // rmse-scale CIs
    FicTable table;
};

// The full data pipeline: wide fit, focus derivatives, one ML fit and one
// scored record per admissible mask.
inline AnalysisResult fic_analysis(const GlmDataset& data, const FocusSpec& spec,
                                   const std::vector<SubmodelMask>& masks,
                                   const AnalysisOptions& opt = {}) {
    AnalysisResult res;
    res.background = fit_wide(data);
    attach_focus(res.background, spec, data.family);
    res.exp = LimitExperiment(res.background.tau0_hat, res.background.omega_hat,
                              res.background.Qhat);
    res.exp.D = res.background.Dn;

    std::vector<FicTableEntry> entries;
    entries.reserve(masks.size());
    std::size_t failures = 0;
    for (const auto& S : masks) {
        SubmodelFit fit = fit_submodel(data, spec, S);
        if (!fit.ok) ++failures;
        res.fits.push_back(fit);
        if (!fit.ok) continue;
        FicTableEntry e;
        e.S = S;
        e.geom = geometry(res.exp, S);
        e.mu_hat = fit.mu_hat;
        entries.push_back(std::move(e));
    }
    if (failures == masks.size())
        throw FitError("fic_analysis: every candidate model failed to fit");
    res.table = build_fic_table(entries, res.background.omega_hat, res.background.Dn,
                                double(res.background.n), opt.rank_by, opt.quantile_q);
    res.cds.reserve(entries.size());
    res.intervals.reserve(entries.size());
    for (const auto& e : entries) {
        RmseCD cd = make_cd(e.geom, res.background.omega_hat, res.background.Dn,
                            double(res.background.n));
        res.cds.push_back(cd);
        res.intervals.push_back(cd_interval(cd, opt.ci_level));
    }
    return res;
}

} // namespace ficlab
