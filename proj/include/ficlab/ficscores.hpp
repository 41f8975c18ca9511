#pragma once

// FIC scores and ranked FIC tables.
//
// In the limit experiment the unbiased risk estimate for model S is
//     FIC^u_S = tau_S^2 + omega'(I-G_S)(DD' - Q)(I-G_S)' omega,
// equivalently tau_S^2 + (raw bias)^2 - sigma_S^2, and FIC^t truncates
// the squared-bias estimate at zero.  On the data scale the scores are
// reported as root-FIC = sqrt(max(FIC,0))/sqrt(n), the estimated rmse of
// the focus estimator.  The table's bias column carries the truncated
// bias sqrt(max(raw^2 - sigma_S^2, 0))/sqrt(n), so that
// root_fic_t^2 = stdev^2 + bias^2 holds exactly.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "ficlab/cdfic.hpp"
#include "ficlab/limitcore.hpp"

namespace ficlab {

struct FicPair {
    double fic_u = 0.0;
    double fic_t = 0.0;
};

inline FicPair fic_scores(const SubmodelGeometry& g, const Vec& omega, const Vec& D) {
    FicPair out;
    if (g.sigmaS2 <= 0.0) { // wide model: no bias estimate involved
        out.fic_u = out.fic_t = g.tauS2;
        return out;
    }
    Vec IGw = omega - g.G.transpose() * omega;
    double raw = IGw.dot(D);
    double bias_sq_unbiased = raw * raw - g.sigmaS2;
    out.fic_u = g.tauS2 + bias_sq_unbiased;
    out.fic_t = g.tauS2 + std::max(bias_sq_unbiased, 0.0);
    return out;
}

inline FicPair fic_scores(const LimitExperiment& exp, const SubmodelMask& S) {
    if (!exp.D) throw std::invalid_argument("fic_scores: experiment carries no D");
    return fic_scores(geometry(exp, S), exp.omega, *exp.D);
}

// r_S = |omega'(I-G_S)D| / sigma_S, zero for the wide model by convention
inline double bias_ratio(const SubmodelGeometry& g, const Vec& omega, const Vec& D) {
    if (g.sigmaS2 <= 0.0) return 0.0;
    Vec IGw = omega - g.G.transpose() * omega;
    return std::fabs(IGw.dot(D)) / std::sqrt(g.sigmaS2);
}

inline double bias_ratio(const LimitExperiment& exp, const SubmodelMask& S) {
    if (!exp.D) throw std::invalid_argument("bias_ratio: experiment carries no D");
    return bias_ratio(geometry(exp, S), exp.omega, *exp.D);
}

enum class ScoreVariant { fic_t, fic_u, median, quantile };

struct FicRecord {
    SubmodelMask S;
    double mu_hat = 0.0;
    double stdev = 0.0;     // tau_S_hat / sqrt(n)
    double abs_bias = 0.0;  // |omega'(I-G_S) D_n| / sqrt(n), untruncated
    double bias = 0.0;      // truncated bias, the table column
    double fic_u = 0.0;     // limit scale
    double fic_t = 0.0;
    double root_fic_u = 0.0; // data scale
    double root_fic_t = 0.0;
    double quantile_fic = 0.0; // rho-scale quantile score (median by default)
    double r_S = 0.0;
    int rank = 0;
};

struct FicTable {
    std::vector<FicRecord> records; // enumeration order (size, then bitmask)
    ScoreVariant rank_by = ScoreVariant::fic_t;
    double quantile_q = 0.5;
    double n = 1.0;
};

inline double ranking_score(const FicRecord& r, ScoreVariant v) {
    switch (v) {
        case ScoreVariant::fic_u: return r.root_fic_u;
        case ScoreVariant::median:
        case ScoreVariant::quantile: return r.quantile_fic;
        default: return r.root_fic_t;
    }
}

// Assigns 1-based ranks by ascending score; ties go to the model with
// fewer parameters, then to the smaller bitmask.
inline void assign_ranks(FicTable& table) {
    std::vector<std::size_t> order(table.records.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const FicRecord &ra = table.records[a], &rb = table.records[b];
        double sa = ranking_score(ra, table.rank_by);
        double sb = ranking_score(rb, table.rank_by);
        if (sa != sb) return sa < sb;
        if (ra.S.size() != rb.S.size()) return ra.S.size() < rb.S.size();
        return ra.S.bits < rb.S.bits;
    });
    for (std::size_t pos = 0; pos < order.size(); ++pos)
        table.records[order[pos]].rank = static_cast<int>(pos) + 1;
}

// Per-model inputs assembled by the caller (data pipeline or limit study).
struct FicTableEntry {
    SubmodelMask S;
    SubmodelGeometry geom;
    double mu_hat = 0.0;
};

inline FicTable build_fic_table(const std::vector<FicTableEntry>& entries,
                                const Vec& omega, const Vec& D, double n,
                                ScoreVariant rank_by = ScoreVariant::fic_t,
                                double quantile_q = 0.5) {
    FicTable table;
    table.rank_by = rank_by;
    table.quantile_q = (rank_by == ScoreVariant::median) ? 0.5 : quantile_q;
    table.n = n;
    const double sqrt_n = std::sqrt(n);
    table.records.reserve(entries.size());
    for (const auto& e : entries) {
        FicRecord r;
        r.S = e.S;
        r.mu_hat = e.mu_hat;
        r.stdev = std::sqrt(e.geom.tauS2) / sqrt_n;
        FicPair fp = fic_scores(e.geom, omega, D);
        r.fic_u = fp.fic_u;
        r.fic_t = fp.fic_t;
        r.root_fic_u = std::sqrt(std::max(fp.fic_u, 0.0) / n);
        r.root_fic_t = std::sqrt(fp.fic_t / n);
        if (e.geom.sigmaS2 > 0.0) {
            Vec IGw = omega - e.geom.G.transpose() * omega;
            double raw = IGw.dot(D);
            r.abs_bias = std::fabs(raw) / sqrt_n;
            r.bias = std::sqrt(std::max(raw * raw - e.geom.sigmaS2, 0.0)) / sqrt_n;
            r.r_S = std::fabs(raw) / std::sqrt(e.geom.sigmaS2);
        }
        RmseCD cd = make_cd(e.geom, omega, D, n);
        r.quantile_fic = cd_quantile_rho(cd, table.quantile_q);
        table.records.push_back(std::move(r));
    }
    assign_ranks(table);
    return table;
}

inline std::string format_significant(double v, int digits = 6) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

// CSV with the fixed leading columns model,in_out,estimate,stdev,bias,
// root_fic,rank followed by the score-variant columns.
inline std::string fic_table_csv(const FicTable& table) {
    std::string out =
        "model,in_out,estimate,stdev,bias,root_fic,rank,"
        "fic_u,fic_t,root_fic_u,quantile_fic,r_s\n";
    int model_no = 0;
    for (const auto& r : table.records) {
        ++model_no;
        double root_fic = ranking_score(r, table.rank_by);
        out += std::to_string(model_no);
        out += ',';
        out += r.S.label();
        out += ',';
        out += format_significant(r.mu_hat);
        out += ',';
        out += format_significant(r.stdev);
        out += ',';
        out += format_significant(r.bias);
        out += ',';
        out += format_significant(root_fic);
        out += ',';
        out += std::to_string(r.rank);
        out += ',';
        out += format_significant(r.fic_u);
        out += ',';
        out += format_significant(r.fic_t);
        out += ',';
        out += format_significant(r.root_fic_u);
        out += ',';
        out += format_significant(r.quantile_fic);
        out += ',';
        out += format_significant(r.r_S);
        out += '\n';
    }
    return out;
}

} // namespace ficlab
