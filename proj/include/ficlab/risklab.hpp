#pragma once

// Risk studies for the selection and averaging schemes: the scalar
// squared-bias prototype (estimate phi = eta^2 from X ~ N(eta, 1)), the
// narrow-vs-wide threshold estimators, two-parameter winner maps, and a
// finite-sample linear-model harness with exact per-round rmse.
//
// All Monte Carlo loops use one RNG stream per grid point, cell or round,
// so results are identical for any thread count, and schemes sharing a
// seed share their draws (common random numbers).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "ficlab/averaging.hpp"
#include "ficlab/cdfic.hpp"
#include "ficlab/ficscores.hpp"
#include "ficlab/glmfit.hpp"
#include "ficlab/limitcore.hpp"
#include "ficlab/rng.hpp"
#include "ficlab/special.hpp"

namespace ficlab {

struct RiskCurve {
    Vec grid;
    std::string scheme;
    Vec value; // risk per grid point
    Vec mc_se; // Monte Carlo standard error of each risk value
};

inline const char* score_variant_name(ScoreVariant v) {
    switch (v) {
        case ScoreVariant::fic_u: return "u";
        case ScoreVariant::fic_t: return "t";
        case ScoreVariant::median: return "median";
        default: return "quantile";
    }
}

// Estimators of phi = eta^2 from a single X ~ N(eta, 1). The u and t forms
// are X^2 - 1 and its positive part; median and quantile read off the CD
// C(phi, x) = 1 - Gamma1(x^2, phi), which is the rmse CD with tau^2 = 0 and
// sigma^2 = 1.
inline double phi_estimate(ScoreVariant v, double x, double quantile_q = 0.5) {
    switch (v) {
        case ScoreVariant::fic_u: return x * x - 1.0;
        case ScoreVariant::fic_t: return std::max(x * x - 1.0, 0.0);
        default: {
            RmseCD cd;
            cd.tauS2 = 0.0;
            cd.sigmaS2 = 1.0;
            cd.b_obs = x * x;
            return cd_quantile(cd, v == ScoreVariant::median ? 0.5 : quantile_q);
        }
    }
}

inline RiskCurve phi_risk(ScoreVariant scheme, const Vec& phi_grid, std::size_t n_draws,
                          std::uint64_t seed, double quantile_q = 0.5) {
    const int m = static_cast<int>(phi_grid.size());
    for (int i = 0; i < m; ++i)
        if (phi_grid[i] < 0.0) throw std::invalid_argument("phi_risk: phi must be >= 0");
    RiskCurve out;
    out.grid = phi_grid;
    out.scheme = scheme == ScoreVariant::quantile
                     ? std::string("quantile(") + format_significant(quantile_q) + ")"
                     : score_variant_name(scheme);
    out.value.resize(m);
    out.mc_se.resize(m);
    parallel_chunks(m, m, [&](std::size_t cell, std::size_t, std::size_t) {
        Rng rng(seed, cell);
        const double eta = std::sqrt(phi_grid[cell]);
        double s1 = 0.0, s2 = 0.0;
        for (std::size_t i = 0; i < n_draws; ++i) {
            double x = eta + rng.normal();
            double err = phi_estimate(scheme, x, quantile_q) - phi_grid[cell];
            s1 += err * err;
            s2 += err * err * err * err;
        }
        const double n = double(n_draws);
        out.value[cell] = s1 / n;
        out.mc_se[cell] = std::sqrt(std::max(s2 / n - (s1 / n) * (s1 / n), 0.0) / n);
    });
    return out;
}

// Threshold t0 of the narrow-vs-wide rule: the smallest |t(D)| at which the
// scheme switches to the wide model.
inline double narrow_wide_cutoff(ScoreVariant scheme, double quantile_q = 0.5) {
    switch (scheme) {
        case ScoreVariant::fic_u:
        case ScoreVariant::fic_t:
            return std::sqrt(2.0);
        case ScoreVariant::median:
            return std::sqrt(nc_chi2_1_quantile(0.5, 1.0));
        case ScoreVariant::quantile:
            // boundary of quantile-FIC(narrow) <= FIC(wide)
            return std::sqrt(nc_chi2_1_quantile(1.0 - quantile_q, 1.0));
    }
    return 0.0;
}

// R(eta) = E[ t 1{|t| > t0} - eta ]^2 with t ~ N(eta, 1). The full limiting
// risk is tau0^2 + omega' Q omega * R(eta); simulate in normalized units.
inline RiskCurve narrow_wide_risk(double t0, const Vec& eta_grid, std::size_t n_draws,
                                  std::uint64_t seed, std::string label = "") {
    if (t0 < 0.0) throw std::invalid_argument("narrow_wide_risk: t0 must be >= 0");
    RiskCurve out;
    out.grid = eta_grid;
    out.scheme = label.empty() ? "t0=" + format_significant(t0) : std::move(label);
    const int m = static_cast<int>(eta_grid.size());
    out.value.resize(m);
    out.mc_se.resize(m);
    parallel_chunks(m, m, [&](std::size_t cell, std::size_t, std::size_t) {
        Rng rng(seed, cell);
        const double eta = eta_grid[cell];
        double s1 = 0.0, s2 = 0.0;
        for (std::size_t i = 0; i < n_draws; ++i) {
            double t = eta + rng.normal();
            double est = std::fabs(t) > t0 ? t : 0.0;
            double err = est - eta;
            s1 += err * err;
            s2 += err * err * err * err;
        }
        const double n = double(n_draws);
        out.value[cell] = s1 / n;
        out.mc_se[cell] = std::sqrt(std::max(s2 / n - (s1 / n) * (s1 / n), 0.0) / n);
    });
    return out;
}

// Two open parameters, four candidate models, tau0 = 0: per-cell risk of
// the post-selection estimator under each scheme, the winning scheme, and
// the risk of a reference scheme relative to its best competitor.
struct RiskMap {
    Vec grid1, grid2; // delta1 and delta2 abscissae
    std::vector<std::string> schemes;
    std::vector<Mat> risk;  // one grid1.size() x grid2.size() matrix per scheme
    std::vector<Mat> mc_se;
    Eigen::MatrixXi winner; // argmin over schemes
};

inline Mat riskmap_ratio(const RiskMap& map, int reference) {
    const int K = static_cast<int>(map.schemes.size());
    if (reference < 0 || reference >= K) throw std::invalid_argument("riskmap_ratio: bad index");
    if (K < 2) throw std::invalid_argument("riskmap_ratio: need at least two schemes");
    Mat ratio(map.grid1.size(), map.grid2.size());
    for (int a = 0; a < ratio.rows(); ++a)
        for (int b = 0; b < ratio.cols(); ++b) {
            double best = std::numeric_limits<double>::infinity();
            for (int k = 0; k < K; ++k)
                if (k != reference) best = std::min(best, map.risk[k](a, b));
            ratio(a, b) = map.risk[reference](a, b) / best;
        }
    return ratio;
}

inline RiskMap q2_riskmap(const Vec& omega, const Vec& kappa, const Vec& grid1,
                          const Vec& grid2, const std::vector<WeightScheme>& schemes,
                          std::size_t n_draws, std::uint64_t seed) {
    if (omega.size() != 2 || kappa.size() != 2)
        throw std::invalid_argument("q2_riskmap: omega and kappa must have length 2");
    if (schemes.empty()) throw std::invalid_argument("q2_riskmap: no schemes");
    Mat Q = Mat::Zero(2, 2);
    Q(0, 0) = kappa[0] * kappa[0];
    Q(1, 1) = kappa[1] * kappa[1];
    LimitExperiment exp(0.0, omega, Q);
    AveragingContext ctx = make_averaging_context(exp, all_masks(2));

    RiskMap map;
    map.grid1 = grid1;
    map.grid2 = grid2;
    const int K = static_cast<int>(schemes.size());
    for (const auto& s : schemes) {
        switch (s.kind) {
            case WeightScheme::Kind::post_selection:
                map.schemes.push_back(s.score == ScoreVariant::quantile
                                          ? std::string("quantile(") +
                                                format_significant(s.quantile_q) + ")"
                                          : score_variant_name(s.score));
                break;
            case WeightScheme::Kind::aic_limit: map.schemes.push_back("aic"); break;
            case WeightScheme::Kind::always_wide: map.schemes.push_back("wide"); break;
            case WeightScheme::Kind::exp_fixed_lambda:
                map.schemes.push_back("exp(" + format_significant(s.lambda) + ")");
                break;
            case WeightScheme::Kind::exp_cd_lambda: map.schemes.push_back("exp-cd"); break;
            case WeightScheme::Kind::custom: map.schemes.push_back("custom"); break;
        }
    }
    const int m1 = static_cast<int>(grid1.size()), m2 = static_cast<int>(grid2.size());
    for (int k = 0; k < K; ++k) {
        map.risk.emplace_back(m1, m2);
        map.mc_se.emplace_back(m1, m2);
    }
    map.winner.resize(m1, m2);

    const std::size_t cells = std::size_t(m1) * m2;
    parallel_chunks(cells, cells, [&](std::size_t cell, std::size_t, std::size_t) {
        const int a = static_cast<int>(cell / m2), b = static_cast<int>(cell % m2);
        Rng rng(seed, cell);
        Vec delta(2);
        delta << grid1[a], grid2[b];
        const double target = omega.dot(delta);
        std::vector<double> s1(K, 0.0), s2(K, 0.0);
        Vec z(2), D(2);
        for (std::size_t i = 0; i < n_draws; ++i) {
            z << rng.normal(), rng.normal();
            D = delta + ctx.cholL * z;
            for (int k = 0; k < K; ++k) {
                Vec w = model_weights(ctx, D, schemes[k]);
                double est = 0.0;
                for (int j = 0; j < w.size(); ++j)
                    if (w[j] != 0.0) est += w[j] * ctx.shift_sel.row(j).dot(D);
                double err = est - target;
                s1[k] += err * err;
                s2[k] += err * err * err * err;
            }
        }
        int best = 0;
        for (int k = 0; k < K; ++k) {
            const double n = double(n_draws);
            map.risk[k](a, b) = s1[k] / n;
            map.mc_se[k](a, b) =
                std::sqrt(std::max(s2[k] / n - (s1[k] / n) * (s1[k] / n), 0.0) / n);
            if (map.risk[k](a, b) < map.risk[best](a, b)) best = k;
        }
        map.winner(a, b) = best;
    });
    return map;
}

// Finite-sample study for the linear model: per round, simulate a dataset,
// run the full analysis pipeline, and compare the interval and score output
// against the exact rmse of each candidate, available in closed form.
struct HarnessConfig {
    int n = 100;
    int rounds = 1000;
    double sigma = 2.0;
    Vec gamma;      // true open coefficients
    Mat corr;       // covariate correlation matrix (unit variances)
    double x0 = 0.0; // focus loading on the protected intercept
    Vec z0;         // focus loadings on the open covariates
    double ci_level = 0.8;
    ScoreVariant rank_by = ScoreVariant::median;
    double quantile_q = 0.5;

    static HarnessConfig benchmark_defaults() {
        HarnessConfig c;
        c.gamma = Vec(3);
        c.gamma << 2.0, -1.0, 0.5;
        c.corr = Mat(3, 3);
        c.corr << 1.0, -0.7, -0.7,
                  -0.7, 1.0, 0.9,
                  -0.7, 0.9, 1.0;
        c.z0 = Vec(3);
        c.z0 << -0.1, 1.0, -0.5;
        return c;
    }
};

struct HarnessResult {
    std::vector<SubmodelMask> masks;
    Vec coverage_pct;   // CI coverage of the exact rmse, per model
    Vec winner_pct;     // share of rounds each model ranks first
    Vec avg_root_fic;   // mean of the ranking score (rho scale)
    Vec avg_true_rmse;  // mean exact rmse
    double fic_rmse_correlation = 0.0;
    int discarded_rounds = 0;
};

inline HarnessResult finite_sample_harness(const HarnessConfig& cfg, std::uint64_t seed) {
    const int q = static_cast<int>(cfg.gamma.size());
    if (cfg.corr.rows() != q || cfg.corr.cols() != q)
        throw std::invalid_argument("harness: corr must be q x q");
    if (cfg.z0.size() != q) throw std::invalid_argument("harness: z0 length mismatch");
    if (cfg.n <= q + 2) throw std::invalid_argument("harness: n too small");

    Mat Lcorr = Eigen::LLT<Mat>(cfg.corr).matrixL();
    if (!cfg.corr.isApprox(Lcorr * Lcorr.transpose(), 1e-8))
        throw std::invalid_argument("harness: corr is not positive definite");

    const auto masks = all_masks(q);
    const int K = static_cast<int>(masks.size());
    const double mu0 = cfg.z0.dot(cfg.gamma); // true focus; protected part has x0 * beta0 = 0

    struct RoundStats {
        std::vector<int> cover, win;
        std::vector<double> fic_sum, true_sum;
        int discarded = 0;
        RoundStats(int K)
            : cover(K, 0), win(K, 0), fic_sum(K, 0.0), true_sum(K, 0.0) {}
    };
    const std::size_t n_chunks = std::min<std::size_t>(256, cfg.rounds);
    std::vector<RoundStats> per_chunk(n_chunks, RoundStats(K));

    AnalysisOptions opt;
    opt.rank_by = cfg.rank_by;
    opt.quantile_q = cfg.quantile_q;
    opt.ci_level = cfg.ci_level;

    parallel_chunks(cfg.rounds, n_chunks, [&](std::size_t chunk, std::size_t begin,
                                              std::size_t end) {
        Rng rng(seed, chunk);
        RoundStats& acc = per_chunk[chunk];
        Vec zrow(q);
        for (std::size_t round = begin; round < end; ++round) {
            GlmDataset data;
            data.family = Family::linear;
            data.X = Mat::Ones(cfg.n, 1);
            data.Z.resize(cfg.n, q);
            data.y.resize(cfg.n);
            for (int i = 0; i < cfg.n; ++i) {
                for (int j = 0; j < q; ++j) zrow[j] = rng.normal();
                data.Z.row(i) = (Lcorr * zrow).transpose();
                data.y[i] = data.Z.row(i).dot(cfg.gamma) + cfg.sigma * rng.normal();
            }
            data.gamma0 = Vec::Zero(q);

            FocusSpec focus;
            focus.kind = FocusKind::linear_predictor;
            focus.x0 = Vec::Constant(1, cfg.x0);
            focus.z0 = cfg.z0;

            AnalysisResult res;
            try {
                res = fic_analysis(data, focus, masks, opt);
            } catch (const std::exception&) {
                ++acc.discarded;
                continue;
            }
            if (res.table.records.size() != std::size_t(K)) {
                ++acc.discarded;
                continue;
            }

            // exact rmse of each candidate under the true data law
            Vec mean_y = data.Z * cfg.gamma;
            int best_rank_k = -1;
            for (int k = 0; k < K; ++k) {
                const auto idx = masks[k].indices();
                Mat W(cfg.n, 1 + idx.size());
                W.col(0) = data.X.col(0);
                Vec cS(1 + idx.size());
                cS[0] = cfg.x0;
                for (std::size_t a = 0; a < idx.size(); ++a) {
                    W.col(1 + a) = data.Z.col(idx[a]);
                    cS[1 + a] = cfg.z0[idx[a]];
                }
                Vec A = (W.transpose() * W).llt().solve(cS);
                double var = cfg.sigma * cfg.sigma * cS.dot(A);
                double bias = (W * A).dot(mean_y) - mu0;
                double true_rmse = std::sqrt(bias * bias + var);
                acc.true_sum[k] += true_rmse;

                // records are in mask order (same enumeration), ranks attached
                const FicRecord& rec = res.table.records[k];
                acc.fic_sum[k] += ranking_score(rec, cfg.rank_by);
                auto [lo, hi] = res.intervals[k];
                if (lo <= true_rmse && true_rmse <= hi) ++acc.cover[k];
                if (rec.rank == 1) best_rank_k = k;
            }
            if (best_rank_k >= 0) ++acc.win[best_rank_k];
        }
    });

    HarnessResult out;
    out.masks = masks;
    out.coverage_pct.resize(K);
    out.winner_pct.resize(K);
    out.avg_root_fic.resize(K);
    out.avg_true_rmse.resize(K);
    std::vector<double> cover(K, 0.0), win(K, 0.0), fic(K, 0.0), truth(K, 0.0);
    for (const auto& acc : per_chunk) {
        out.discarded_rounds += acc.discarded;
        for (int k = 0; k < K; ++k) {
            cover[k] += acc.cover[k];
            win[k] += acc.win[k];
            fic[k] += acc.fic_sum[k];
            truth[k] += acc.true_sum[k];
        }
    }
    const double used = double(cfg.rounds - out.discarded_rounds);
    if (used <= 0.0) throw std::runtime_error("harness: every round failed");
    for (int k = 0; k < K; ++k) {
        out.coverage_pct[k] = 100.0 * cover[k] / used;
        out.winner_pct[k] = 100.0 * win[k] / used;
        out.avg_root_fic[k] = fic[k] / used;
        out.avg_true_rmse[k] = truth[k] / used;
    }
    // correlation of average score with average exact rmse across models
    double mf = out.avg_root_fic.mean(), mt = out.avg_true_rmse.mean();
    double sft = 0.0, sff = 0.0, stt = 0.0;
    for (int k = 0; k < K; ++k) {
        sft += (out.avg_root_fic[k] - mf) * (out.avg_true_rmse[k] - mt);
        sff += (out.avg_root_fic[k] - mf) * (out.avg_root_fic[k] - mf);
        stt += (out.avg_true_rmse[k] - mt) * (out.avg_true_rmse[k] - mt);
    }
    out.fic_rmse_correlation = sft / std::sqrt(sff * stt);
    return out;
}

} // namespace ficlab
