#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "ficlab/csv.hpp"
#include "ficlab/ficscores.hpp"

using namespace ficlab;
using Catch::Approx;

namespace {

Mat random_spd(int q, Rng& rng) {
    Mat A(q, q);
    for (int i = 0; i < q; ++i)
        for (int j = 0; j < q; ++j) A(i, j) = rng.normal();
    return A * A.transpose() + 0.4 * double(q) * Mat::Identity(q, q);
}

Vec random_vec(int q, Rng& rng, double scale = 1.0) {
    Vec v(q);
    for (int j = 0; j < q; ++j) v[j] = scale * (2.0 * rng.uniform() - 1.0);
    return v;
}

constexpr double kRHalf = 0.6744897501960817;    // sqrt of the chi2_1 median
constexpr double kRQuarter = 1.1503493803760079; // sqrt of chi2_1_quantile(0.75)

} // namespace

TEST_CASE("score ordering and truncation rungs hold on random instances") {
    Rng rng(1234);
    int checked = 0;
    for (int trial = 0; trial < 10000; ++trial) {
        int q = 1 + int(rng.next_u64() % 5);
        Mat Q = random_spd(q, rng);
        Vec omega = random_vec(q, rng);
        double tau0 = 1.5 * rng.uniform();
        LimitExperiment exp(tau0, omega, Q);
        Vec D = random_vec(q, rng, 3.0);
        std::uint32_t bits = static_cast<std::uint32_t>(rng.next_u64() & ((1u << q) - 1));
        SubmodelMask S(bits, q);
        SubmodelGeometry g = geometry(exp, S);
        FicPair fp = fic_scores(g, omega, D);
        RmseCD cd = make_cd(g, omega, D);
        double fic_m = median_fic(cd);
        double fic_q25 = cd_quantile(cd, 0.25);
        double tauS2 = g.tauS2;

        // universal ordering, all scales
        CHECK(fic_m >= fp.fic_t - 1e-9);
        CHECK(fp.fic_t >= fp.fic_u - 1e-12);
        CHECK(fic_m >= fic_q25 - 1e-9);

        if (g.sigmaS2 <= 0.0) { // full model: every score is the variance
            CHECK(fp.fic_u == Approx(tauS2).margin(1e-12));
            CHECK(fp.fic_t == Approx(tauS2).margin(1e-12));
            CHECK(fic_m == Approx(tauS2).margin(1e-12));
            continue;
        }

        double r = bias_ratio(g, omega, D);
        ++checked;
        if (r < kRHalf - 0.02) {
            CHECK(fic_m == Approx(tauS2).margin(1e-10));
            CHECK(fp.fic_t == Approx(tauS2).margin(1e-12));
            CHECK(fp.fic_u < tauS2);
        } else if (r > kRHalf + 0.02 && r < 1.0 - 0.02) {
            CHECK(fic_m > tauS2);
            CHECK(fp.fic_t == Approx(tauS2).margin(1e-12));
            CHECK(fp.fic_u < tauS2);
        } else if (r > 1.0 + 0.02) {
            CHECK(fp.fic_t == Approx(fp.fic_u).margin(1e-12));
            CHECK(fp.fic_u >= tauS2);
            CHECK(fic_m >= fp.fic_t - 1e-9);
        }
        if (r < kRQuarter - 0.02) {
            CHECK(fic_q25 == Approx(tauS2).margin(1e-10));
        }
        if (r > 1.0 + 0.02) {
            CHECK(fp.fic_t >= fic_q25 - 1e-9);
        }
    }
    REQUIRE(checked > 5000);
}

TEST_CASE("bias ratio is the absolute standardized raw bias") {
    Rng rng(88);
    Mat Q = random_spd(3, rng);
    Vec omega = random_vec(3, rng);
    LimitExperiment exp(0.2, omega, Q);
    Vec D = random_vec(3, rng, 2.0);
    SubmodelMask S(0b010, 3);
    SubmodelGeometry g = geometry(exp, S);
    Vec IGw = omega - g.G.transpose() * omega;
    CHECK(bias_ratio(g, omega, D) ==
          Approx(std::fabs(IGw.dot(D)) / std::sqrt(g.sigmaS2)).margin(1e-12));
    CHECK(bias_ratio(geometry(exp, SubmodelMask::full(3)), omega, D) == 0.0);
}

TEST_CASE("table rows keep mask order and satisfy the Pythagorean split") {
    Rng rng(555);
    for (int trial = 0; trial < 300; ++trial) {
        int q = 1 + int(rng.next_u64() % 4);
        Mat Q = random_spd(q, rng);
        Vec omega = random_vec(q, rng);
        LimitExperiment exp(rng.uniform(), omega, Q);
        Vec D = random_vec(q, rng, 3.0);
        double n = 1.0 + 200.0 * rng.uniform();

        auto masks = all_masks(q);
        std::vector<FicTableEntry> entries;
        for (const auto& S : masks)
            entries.push_back({S, geometry(exp, S), rng.normal()});
        FicTable table = build_fic_table(entries, omega, D, n);

        REQUIRE(table.records.size() == masks.size());
        for (std::size_t k = 0; k < masks.size(); ++k) {
            const FicRecord& r = table.records[k];
            CHECK(r.S == masks[k]); // ranks are attached without reordering
            double lhs = r.root_fic_t * r.root_fic_t;
            double rhs = r.stdev * r.stdev + r.bias * r.bias;
            CHECK(std::fabs(lhs - rhs) < 1e-10);
            CHECK(r.fic_u <= r.fic_t + 1e-12);
            CHECK(r.root_fic_u == Approx(std::sqrt(std::max(r.fic_u, 0.0) / n)).margin(1e-12));
        }

        // ranks are a permutation of 1..K ordered by the ranking score
        std::vector<int> seen(masks.size(), 0);
        for (const auto& r : table.records) {
            REQUIRE(r.rank >= 1);
            REQUIRE(r.rank <= int(masks.size()));
            ++seen[r.rank - 1];
        }
        for (int c : seen) CHECK(c == 1);
        for (const auto& a : table.records)
            for (const auto& b : table.records)
                if (a.rank < b.rank)
                    CHECK(ranking_score(a, table.rank_by) <=
                          ranking_score(b, table.rank_by) + 1e-12);
    }
}

TEST_CASE("ranking score selects the requested column") {
    FicRecord r;
    r.root_fic_t = 1.0;
    r.root_fic_u = 2.0;
    r.quantile_fic = 3.0;
    CHECK(ranking_score(r, ScoreVariant::fic_t) == 1.0);
    CHECK(ranking_score(r, ScoreVariant::fic_u) == 2.0);
    CHECK(ranking_score(r, ScoreVariant::median) == 3.0);
    CHECK(ranking_score(r, ScoreVariant::quantile) == 3.0);
}

TEST_CASE("rank ties break toward fewer parameters, then smaller bitmask") {
    FicTable table;
    table.rank_by = ScoreVariant::fic_t;
    auto add = [&](std::uint32_t bits, double score) {
        FicRecord r;
        r.S = SubmodelMask(bits, 2);
        r.root_fic_t = score;
        table.records.push_back(r);
    };
    add(0b11, 0.5); // two parameters
    add(0b10, 0.5); // one parameter, larger bitmask
    add(0b01, 0.5); // one parameter, smaller bitmask
    add(0b00, 0.7);
    assign_ranks(table);
    CHECK(table.records[0].rank == 3);
    CHECK(table.records[1].rank == 2);
    CHECK(table.records[2].rank == 1);
    CHECK(table.records[3].rank == 4);
}

TEST_CASE("median ranking pins the table quantile at one half") {
    LimitExperiment exp(0.1, Vec::Ones(2), Mat::Identity(2, 2));
    Vec D(2);
    D << 1.0, -1.0;
    std::vector<FicTableEntry> entries;
    for (const auto& S : all_masks(2)) entries.push_back({S, geometry(exp, S), 0.0});
    FicTable med = build_fic_table(entries, exp.omega, D, 10.0, ScoreVariant::median, 0.3);
    CHECK(med.quantile_q == 0.5);
    FicTable quart = build_fic_table(entries, exp.omega, D, 10.0, ScoreVariant::quantile, 0.3);
    CHECK(quart.quantile_q == 0.3);
    for (std::size_t k = 0; k < med.records.size(); ++k)
        CHECK(quart.records[k].quantile_fic <= med.records[k].quantile_fic + 1e-12);
}

TEST_CASE("six significant digits in the compact formatter") {
    CHECK(format_significant(0.123456789) == "0.123457");
    CHECK(format_significant(1234567.0) == "1.23457e+06");
    CHECK(format_significant(2.0) == "2");
    CHECK(format_significant(-0.25) == "-0.25");
    CHECK(format_significant(0.5, 2) == "0.5");
}

TEST_CASE("table csv has the fixed header and parses back") {
    LimitExperiment exp(0.3, Vec::Ones(3), Mat::Identity(3, 3));
    Vec D(3);
    D << 0.5, 1.5, -2.0;
    std::vector<FicTableEntry> entries;
    double mu = 0.0;
    for (const auto& S : all_masks(3)) entries.push_back({S, geometry(exp, S), mu += 0.1});
    FicTable table = build_fic_table(entries, exp.omega, D, 100.0);
    std::string csv = fic_table_csv(table);

    CHECK(csv.rfind("model,in_out,estimate,stdev,bias,root_fic,rank,"
                    "fic_u,fic_t,root_fic_u,quantile_fic,r_s\n", 0) == 0);
    std::istringstream in(csv);
    CsvTable parsed = parse_csv(in, "table");
    REQUIRE(parsed.rows() == 8);
    REQUIRE(parsed.cols() == 12);
    CHECK(parsed.raw("in_out")[0] == "000");
    CHECK(parsed.raw("in_out")[7] == "111");
    Vec root = parsed.col("root_fic");
    Vec stdev = parsed.col("stdev");
    Vec bias = parsed.col("bias");
    for (int i = 0; i < 8; ++i)
        CHECK(root[i] * root[i] ==
              Approx(stdev[i] * stdev[i] + bias[i] * bias[i]).margin(1e-8));
}
