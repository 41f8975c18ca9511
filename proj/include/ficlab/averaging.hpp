#pragma once

// Model-averaged focus estimators: data-dependent weights over candidate
// models, with schemes ranging from hard selection (best score, limit AIC)
// to softmax weights exp(-lambda * score) with fixed or per-model lambda.
//
// In the limit experiment the averaged estimator has the exact law
//   Lambda* = Lambda0 + omega' (delta - deltahat(D)),
//   deltahat(D) = sum_S v(S | D) G_S D,
// which limit_distribution_sample draws from directly.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "ficlab/cdfic.hpp"
#include "ficlab/ficscores.hpp"
#include "ficlab/limitcore.hpp"
#include "ficlab/rng.hpp"
#include "ficlab/special.hpp"

namespace ficlab {

struct WeightScheme {
    enum class Kind {
        exp_fixed_lambda, // softmax of -lambda * median-FIC
        exp_cd_lambda,    // per-model lambda_S = 1 / C_S(wide mse)
        post_selection,   // all weight on the best score
        aic_limit,        // all weight on the limit-AIC maximizer
        always_wide,
        custom,
    };

    Kind kind = Kind::exp_fixed_lambda;
    double lambda = 1.0;                       // exp_fixed_lambda
    ScoreVariant score = ScoreVariant::median; // post_selection criterion
    double quantile_q = 0.5;                   // for ScoreVariant::quantile
    double cd_floor = 1e-6;                    // caps lambda_S at 1e6
    Vec custom_weights;

    static WeightScheme exp_fixed(double lambda) {
        WeightScheme w;
        w.kind = Kind::exp_fixed_lambda;
        w.lambda = lambda;
        return w;
    }
    static WeightScheme exp_cd() {
        WeightScheme w;
        w.kind = Kind::exp_cd_lambda;
        return w;
    }
    static WeightScheme post(ScoreVariant score, double quantile_q = 0.5) {
        WeightScheme w;
        w.kind = Kind::post_selection;
        w.score = score;
        w.quantile_q = quantile_q;
        return w;
    }
    static WeightScheme aic() {
        WeightScheme w;
        w.kind = Kind::aic_limit;
        return w;
    }
    static WeightScheme wide() {
        WeightScheme w;
        w.kind = Kind::always_wide;
        return w;
    }
    static WeightScheme custom(Vec weights) {
        WeightScheme w;
        w.kind = Kind::custom;
        w.custom_weights = std::move(weights);
        return w;
    }
};

// Per-mask constants hoisted out of the per-draw weight evaluation.
struct AveragingContext {
    LimitExperiment exp;
    std::vector<SubmodelMask> masks;
    Mat shift_sel;          // row k: omega' G_k
    Mat bias_sel;           // row k: omega' (I - G_k)
    Vec tauS2, sigmaS2;
    std::vector<Mat> aic_form; // Q^{-1} G_k, for the limit-AIC quadratic
    std::vector<int> sizes;
    int wide_index = -1;
    double mse_wide = 0.0;  // tau0^2 + omega' Q omega
    Mat cholL;              // chol(Q), lower
};

inline AveragingContext make_averaging_context(const LimitExperiment& exp,
                                               const std::vector<SubmodelMask>& masks) {
    if (masks.empty()) throw std::invalid_argument("averaging: empty mask list");
    AveragingContext ctx;
    ctx.exp = exp;
    ctx.exp.validate();
    ctx.masks = masks;
    const int K = static_cast<int>(masks.size());
    const int q = exp.q;
    ctx.shift_sel.resize(K, q);
    ctx.bias_sel.resize(K, q);
    ctx.tauS2.resize(K);
    ctx.sigmaS2.resize(K);
    ctx.aic_form.reserve(K);
    ctx.sizes.reserve(K);
    Mat Qinv = spd_inverse(exp.Q, "averaging(Q)");
    for (int k = 0; k < K; ++k) {
        const auto& S = masks[k];
        if (S.q != q) throw std::invalid_argument("averaging: mask arity mismatch");
        SubmodelGeometry g = geometry(exp, S);
        ctx.shift_sel.row(k) = (g.G.transpose() * exp.omega).transpose();
        ctx.bias_sel.row(k) = ((Mat::Identity(q, q) - g.G).transpose() * exp.omega).transpose();
        ctx.tauS2[k] = g.tauS2;
        ctx.sigmaS2[k] = g.sigmaS2;
        ctx.aic_form.push_back(Qinv * g.G);
        ctx.sizes.push_back(S.size());
        if (S.is_full()) ctx.wide_index = k;
    }
    ctx.mse_wide = exp.tau0 * exp.tau0 + exp.omega.dot(exp.Q * exp.omega);
    ctx.cholL = Eigen::LLT<Mat>(exp.Q).matrixL();
    return ctx;
}

namespace detail {

inline RmseCD cd_at(const AveragingContext& ctx, int k, double raw) {
    RmseCD cd;
    cd.tauS2 = ctx.tauS2[k];
    cd.sigmaS2 = ctx.sigmaS2[k];
    cd.is_wide = ctx.sigmaS2[k] <= 0.0;
    if (!cd.is_wide) cd.b_obs = raw * raw / cd.sigmaS2;
    return cd;
}

// argmin over models with the parsimony tie rule: score, then |S|, then bits
inline int arg_best(const AveragingContext& ctx, const Vec& score) {
    int best = 0;
    for (int k = 1; k < score.size(); ++k) {
        if (score[k] < score[best] ||
            (score[k] == score[best] &&
             (ctx.sizes[k] < ctx.sizes[best] ||
              (ctx.sizes[k] == ctx.sizes[best] && ctx.masks[k].bits < ctx.masks[best].bits))))
            best = k;
    }
    return best;
}

} // namespace detail

// Softmax of -lambda * score, stabilized by subtracting the smallest score.
inline Vec exp_weights(const Vec& scores, double lambda) {
    const int K = static_cast<int>(scores.size());
    if (K == 0) throw std::invalid_argument("exp_weights: empty score vector");
    for (int k = 0; k < K; ++k)
        if (!std::isfinite(scores[k])) throw std::invalid_argument("exp_weights: score not finite");
    double lo = scores.minCoeff();
    Vec w(K);
    for (int k = 0; k < K; ++k) w[k] = std::exp(-lambda * (scores[k] - lo));
    return w / w.sum();
}

// Weight vector over ctx.masks for the observed D.
inline Vec model_weights(const AveragingContext& ctx, const Vec& D, const WeightScheme& scheme) {
    const int K = static_cast<int>(ctx.masks.size());
    if (D.size() != ctx.exp.q) throw std::invalid_argument("model_weights: D length mismatch");

    switch (scheme.kind) {
        case WeightScheme::Kind::always_wide: {
            if (ctx.wide_index < 0)
                throw std::invalid_argument("always_wide: the full model is not among the candidates");
            Vec w = Vec::Zero(K);
            w[ctx.wide_index] = 1.0;
            return w;
        }
        case WeightScheme::Kind::custom: {
            if (scheme.custom_weights.size() != K)
                throw std::invalid_argument("custom weights: length mismatch");
            double s = 0.0;
            for (int k = 0; k < K; ++k) {
                if (scheme.custom_weights[k] < 0.0)
                    throw std::invalid_argument("custom weights: negative entry");
                s += scheme.custom_weights[k];
            }
            if (s <= 0.0) throw std::invalid_argument("custom weights: all zero");
            return scheme.custom_weights / s;
        }
        case WeightScheme::Kind::aic_limit: {
            Vec score(K);
            for (int k = 0; k < K; ++k)
                score[k] = -(D.dot(ctx.aic_form[k] * D) - 2.0 * ctx.sizes[k]);
            Vec w = Vec::Zero(K);
            w[detail::arg_best(ctx, score)] = 1.0;
            return w;
        }
        case WeightScheme::Kind::post_selection: {
            Vec score(K);
            for (int k = 0; k < K; ++k) {
                double raw = ctx.bias_sel.row(k).dot(D);
                switch (scheme.score) {
                    case ScoreVariant::fic_u:
                        score[k] = ctx.tauS2[k] +
                                   (ctx.sigmaS2[k] > 0.0 ? raw * raw - ctx.sigmaS2[k] : 0.0);
                        break;
                    case ScoreVariant::fic_t:
                        score[k] = ctx.tauS2[k] +
                                   std::max(raw * raw - ctx.sigmaS2[k], 0.0);
                        break;
                    case ScoreVariant::median:
                        score[k] = median_fic(detail::cd_at(ctx, k, raw));
                        break;
                    case ScoreVariant::quantile:
                        score[k] = cd_quantile(detail::cd_at(ctx, k, raw), scheme.quantile_q);
                        break;
                }
            }
            Vec w = Vec::Zero(K);
            w[detail::arg_best(ctx, score)] = 1.0;
            return w;
        }
        case WeightScheme::Kind::exp_fixed_lambda:
        case WeightScheme::Kind::exp_cd_lambda: {
            Vec score(K);
            for (int k = 0; k < K; ++k) {
                double raw = ctx.bias_sel.row(k).dot(D);
                RmseCD cd = detail::cd_at(ctx, k, raw);
                double ficm = median_fic(cd);
                if (scheme.kind == WeightScheme::Kind::exp_fixed_lambda) {
                    score[k] = scheme.lambda * ficm;
                } else {
                    double lam = 1.0;
                    if (!cd.is_wide) {
                        double conf = cd_eval(cd, ctx.mse_wide);
                        lam = 1.0 / std::max(conf, scheme.cd_floor);
                    }
                    score[k] = lam * ficm;
                }
            }
            return exp_weights(score, 1.0);
        }
    }
    throw std::logic_error("model_weights: unhandled scheme");
}

// Keeps only models whose CD at rho_threshold reaches min_confidence, then
// softmax of -lambda * median-FIC among the survivors. Throws when no model
// passes the screen.
inline Vec threshold_screened_weights(const AveragingContext& ctx, const Vec& D,
                                      double rho_threshold, double min_confidence,
                                      double lambda = 1.0) {
    const int K = static_cast<int>(ctx.masks.size());
    std::vector<int> keep;
    Vec ficm(K);
    for (int k = 0; k < K; ++k) {
        double raw = ctx.bias_sel.row(k).dot(D);
        RmseCD cd = detail::cd_at(ctx, k, raw);
        ficm[k] = median_fic(cd);
        if (cd_eval_rho(cd, rho_threshold) >= min_confidence) keep.push_back(k);
    }
    if (keep.empty())
        throw std::runtime_error("threshold screening: no candidate model reaches the "
                                 "requested confidence at this rmse threshold");
    Vec sub(keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i) sub[i] = ficm[keep[i]];
    Vec wsub = exp_weights(sub, lambda);
    Vec w = Vec::Zero(K);
    for (std::size_t i = 0; i < keep.size(); ++i) w[keep[i]] = wsub[i];
    return w;
}

inline double averaged_estimate(const Vec& weights, const Vec& estimates) {
    if (weights.size() != estimates.size())
        throw std::invalid_argument("averaged_estimate: length mismatch");
    return weights.dot(estimates);
}

struct LimitSample {
    std::vector<double> draws; // Lambda* draws, in index order
    double mean = 0.0;
    double rmse = 0.0;       // sqrt of the mean squared draw
    double rmse_se = 0.0;    // delta-method Monte Carlo standard error
};

// Draws from the exact limit law of the averaged estimator at true delta.
// The chunk layout is fixed (independent of thread count), so the output is
// identical for any level of parallelism.
inline LimitSample limit_distribution_sample(const AveragingContext& ctx, const Vec& delta,
                                             const WeightScheme& scheme, std::size_t n_draws,
                                             std::uint64_t seed) {
    if (delta.size() != ctx.exp.q)
        throw std::invalid_argument("limit_distribution_sample: delta length mismatch");
    if (n_draws == 0) throw std::invalid_argument("limit_distribution_sample: n_draws = 0");

    LimitSample out;
    out.draws.resize(n_draws);
    const double mu_shift = ctx.exp.omega.dot(delta);
    const int q = ctx.exp.q;
    const std::size_t n_chunks = std::min<std::size_t>(256, n_draws);

    parallel_chunks(n_draws, n_chunks, [&](std::size_t chunk, std::size_t begin, std::size_t end) {
        Rng rng(seed, chunk);
        Vec z(q), D(q);
        for (std::size_t i = begin; i < end; ++i) {
            for (int j = 0; j < q; ++j) z[j] = rng.normal();
            D = delta + ctx.cholL * z;
            double lambda0 = ctx.exp.tau0 * rng.normal();
            Vec w = model_weights(ctx, D, scheme);
            double shift = 0.0;
            for (int k = 0; k < w.size(); ++k)
                if (w[k] != 0.0) shift += w[k] * ctx.shift_sel.row(k).dot(D);
            out.draws[i] = lambda0 + mu_shift - shift;
        }
    });

    double s1 = 0.0, s2 = 0.0, s4 = 0.0;
    for (double v : out.draws) {
        s1 += v;
        s2 += v * v;
        s4 += v * v * v * v;
    }
    const double n = double(n_draws);
    out.mean = s1 / n;
    double ms = s2 / n;
    out.rmse = std::sqrt(ms);
    double var_ms = std::max(s4 / n - ms * ms, 0.0) / n;
    out.rmse_se = out.rmse > 0.0 ? 0.5 * std::sqrt(var_ms) / out.rmse : 0.0;
    return out;
}

} // namespace ficlab
