#pragma once

// The limit experiment: tau0, omega, Q are known, the local parameter
// delta is observed only through a single draw D ~ N_q(delta, Q), and a
// candidate model S estimates delta by G_S D with
//     G_S = pi_S' Q_S pi_S Q^{-1},   Q_S = (pi_S Q^{-1} pi_S')^{-1}.
// Everything downstream (scores, confidence distributions, averaging,
// risk studies) is a function of this structure.

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ficlab/rng.hpp"

namespace ficlab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Cholesky solve with a condition guard; Q and its compressions are SPD
// by construction, so failure here means a genuinely broken input.
inline Mat spd_inverse(const Mat& A, const char* what) {
    Eigen::LLT<Mat> llt(A);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error(std::string(what) + ": matrix not positive definite");
    Mat inv = llt.solve(Mat::Identity(A.rows(), A.cols()));
    double cond = A.norm() * inv.norm();
    if (!(cond < 1e12))
        throw std::runtime_error(std::string(what) + ": condition number above 1e12");
    return inv;
}

struct SubmodelMask {
    std::uint32_t bits = 0;
    int q = 0;

    SubmodelMask() = default;
    SubmodelMask(std::uint32_t b, int q_) : bits(b), q(q_) {
        if (q_ < 0 || q_ > 31) throw std::invalid_argument("SubmodelMask: bad q");
        if (b >> q_) throw std::invalid_argument("SubmodelMask: bits outside 1..q");
    }

    bool contains(int j) const { return (bits >> j) & 1u; }
    int size() const { return __builtin_popcount(bits); }
    bool is_narrow() const { return bits == 0; }
    bool is_full() const { return bits + 1 == (1u << q); }

    std::vector<int> indices() const {
        std::vector<int> idx;
        for (int j = 0; j < q; ++j)
            if (contains(j)) idx.push_back(j);
        return idx;
    }

    // "101" style label, position j printed 1 when open parameter j+1 is in
    std::string label() const {
        std::string s(q, '0');
        for (int j = 0; j < q; ++j)
            if (contains(j)) s[j] = '1';
        return s;
    }

    static SubmodelMask narrow(int q) { return SubmodelMask(0, q); }
    static SubmodelMask full(int q) { return SubmodelMask((1u << q) - 1, q); }

    bool operator==(const SubmodelMask& o) const { return bits == o.bits && q == o.q; }
};

// All 2^q masks, narrow first and wide last, ordered by size then by
// bitmask value; this matches the conventional table layout where the
// single-covariate models come right after the narrow one.
inline std::vector<SubmodelMask> all_masks(int q) {
    std::vector<SubmodelMask> out;
    out.reserve(std::size_t(1) << q);
    for (int s = 0; s <= q; ++s)
        for (std::uint32_t m = 0; m < (1u << q); ++m)
            if (__builtin_popcount(m) == s) out.emplace_back(m, q);
    return out;
}

struct LimitExperiment {
    int q = 0;
    double tau0 = 0.0;
    Vec omega;
    Mat Q;
    std::optional<Vec> delta;
    std::optional<Vec> D;

    LimitExperiment() = default;
    LimitExperiment(double tau0_, Vec omega_, Mat Q_)
        : q(static_cast<int>(omega_.size())), tau0(tau0_),
          omega(std::move(omega_)), Q(std::move(Q_)) {
        validate();
    }

    void validate() const {
        if (q < 1) throw std::invalid_argument("LimitExperiment: q must be >= 1");
        if (tau0 < 0.0) throw std::invalid_argument("LimitExperiment: tau0 must be >= 0");
        if (Q.rows() != q || Q.cols() != q)
            throw std::invalid_argument("LimitExperiment: Q must be q x q");
        if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-10)
            throw std::invalid_argument("LimitExperiment: Q not symmetric");
        Eigen::SelfAdjointEigenSolver<Mat> es(Q);
        if (es.eigenvalues().minCoeff() <= 0.0)
            throw std::invalid_argument("LimitExperiment: Q not positive definite");
        if (delta && delta->size() != q)
            throw std::invalid_argument("LimitExperiment: delta has wrong length");
        if (D && D->size() != q)
            throw std::invalid_argument("LimitExperiment: D has wrong length");
    }
};

struct SubmodelGeometry {
    Mat G;         // q x q
    Mat QS;        // |S| x |S| (0 x 0 for the narrow model)
    double tauS2 = 0.0;
    double sigmaS2 = 0.0;
};

inline SubmodelGeometry geometry(const LimitExperiment& exp, const SubmodelMask& S) {
    if (S.q != exp.q) throw std::invalid_argument("geometry: mask/experiment mismatch");
    const int q = exp.q;
    SubmodelGeometry g;
    if (S.is_narrow()) {
        // G is exactly zero; no arithmetic involved
        g.G = Mat::Zero(q, q);
        g.QS = Mat(0, 0);
    } else if (S.is_full()) {
        g.G = Mat::Identity(q, q);
        g.QS = exp.Q;
    } else {
        const auto idx = S.indices();
        const int k = static_cast<int>(idx.size());
        Mat Qinv = spd_inverse(exp.Q, "geometry(Q)");
        Mat QinvSS(k, k);
        for (int a = 0; a < k; ++a)
            for (int b = 0; b < k; ++b) QinvSS(a, b) = Qinv(idx[a], idx[b]);
        g.QS = spd_inverse(QinvSS, "geometry(Q_S)");
        // G = pi' QS pi Qinv; build pi' QS pi directly on the S rows/cols
        Mat piQSpi = Mat::Zero(q, q);
        for (int a = 0; a < k; ++a)
            for (int b = 0; b < k; ++b) piQSpi(idx[a], idx[b]) = g.QS(a, b);
        g.G = piQSpi * Qinv;
    }
    const Mat I = Mat::Identity(q, q);
    Vec Gw = g.G.transpose() * exp.omega;       // G' omega
    Vec IGw = (I - g.G).transpose() * exp.omega;
    g.tauS2 = exp.tau0 * exp.tau0 + Gw.dot(exp.Q * Gw);
    g.sigmaS2 = S.is_full() ? 0.0 : IGw.dot(exp.Q * IGw);
    return g;
}

// mse_S(delta) = tau0^2 + omega' G Q G' omega + {omega'(I-G)delta}^2
inline double true_mse(const LimitExperiment& exp, const SubmodelMask& S, const Vec& delta) {
    if (delta.size() != exp.q) throw std::invalid_argument("true_mse: delta length");
    SubmodelGeometry g = geometry(exp, S);
    Vec IGw = (Mat::Identity(exp.q, exp.q) - g.G).transpose() * exp.omega;
    double bias = IGw.dot(delta);
    return g.tauS2 + bias * bias;
}

struct LimitDraw {
    double Lambda0 = 0.0;
    Vec D;
};

// One joint draw of (Lambda0, D): Lambda0 ~ N(0, tau0^2) independent of
// D ~ N_q(delta, Q).
inline LimitDraw sample_limit(const LimitExperiment& exp, const Vec& delta, Rng& rng) {
    if (delta.size() != exp.q) throw std::invalid_argument("sample_limit: delta length");
    LimitDraw out;
    out.Lambda0 = exp.tau0 * rng.normal();
    Eigen::LLT<Mat> llt(exp.Q);
    Vec z(exp.q);
    for (int j = 0; j < exp.q; ++j) z[j] = rng.normal();
    out.D = delta + llt.matrixL() * z;
    return out;
}

// Same draw but with a precomputed Cholesky factor, for tight loops.
inline LimitDraw sample_limit(double tau0, const Vec& delta, const Mat& cholL, Rng& rng) {
    LimitDraw out;
    out.Lambda0 = tau0 * rng.normal();
    Vec z(delta.size());
    for (int j = 0; j < delta.size(); ++j) z[j] = rng.normal();
    out.D = delta + cholL * z;
    return out;
}

} // namespace ficlab
